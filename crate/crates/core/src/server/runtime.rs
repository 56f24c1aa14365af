use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::log::LogLine;
use super::{Clock, Session, Sink, SignalRequest};
use crate::error::{Error, Result};
use crate::modengine::SubtletyLevel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeOptions {
    /// Playback speed relative to real time; infinite means as fast as the
    /// sink accepts frames.
    pub speed: f64,
    pub producer_interval: Duration,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self { speed: 1.0, producer_interval: Duration::from_millis(50) }
    }
}

struct Shared {
    session: Mutex<Session>,
    work: Condvar,
    done: Condvar,
    stop: AtomicBool,
    ended: AtomicBool,
    clock: Arc<dyn Clock>,
    error: Mutex<Option<Error>>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn finished(&self) -> bool {
        self.stop.load(Ordering::SeqCst) || self.ended.load(Ordering::SeqCst)
    }
}

/// Cheap handle for submitting requests to a running session.
#[derive(Clone)]
pub struct SessionHandle {
    shared: Arc<Shared>,
}

impl SessionHandle {
    /// Stamps the request with the session clock and queues it.
    pub fn signal(&self, level: Option<SubtletyLevel>, source: &str) -> Result<u64> {
        let req = SignalRequest { received_at: self.shared.clock.now(), level, source: source.to_string() };
        let id = self.shared.lock().notify(req)?;
        self.shared.work.notify_all();
        Ok(id)
    }

    pub fn set_level(&self, level: SubtletyLevel) -> Result<()> {
        self.shared.lock().set_level(level)
    }

    pub fn task(&self, text: &str) -> Result<()> {
        self.shared.lock().task(text)
    }

    pub fn is_running(&self) -> bool {
        !self.shared.finished()
    }

    /// Runs `f` with the session locked.
    pub fn inspect<R>(&self, f: impl FnOnce(&Session) -> R) -> R {
        f(&self.shared.lock())
    }
}

/// A session driven by its worker threads.
pub struct Runtime {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl Runtime {
    pub fn spawn(session: Session, clock: Arc<dyn Clock>, sink: Box<dyn Sink>, opts: RuntimeOptions) -> Runtime {
        let shared = Arc::new(Shared {
            session: Mutex::new(session),
            work: Condvar::new(),
            done: Condvar::new(),
            stop: AtomicBool::new(false),
            ended: AtomicBool::new(false),
            clock,
            error: Mutex::new(None),
        });
        let threads = vec![
            spawn_named("producer", {
                let s = Arc::clone(&shared);
                move || producer(&s, opts.producer_interval)
            }),
            spawn_named("reader", {
                let s = Arc::clone(&shared);
                move || reader(&s, sink, opts.speed)
            }),
            spawn_named("modifier", {
                let s = Arc::clone(&shared);
                move || modifier(&s)
            }),
        ];
        Runtime { shared, threads }
    }

    pub fn handle(&self) -> SessionHandle {
        SessionHandle { shared: Arc::clone(&self.shared) }
    }

    /// Blocks until the playlist has played out or `timeout` passes.
    /// Returns whether playback ended.
    pub fn wait(&self, timeout: Option<Duration>) -> bool {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut g = self.shared.lock();
        while !self.shared.finished() {
            let wait = match deadline {
                Some(d) => match d.checked_duration_since(Instant::now()) {
                    Some(w) => w,
                    None => break,
                },
                None => Duration::from_millis(200),
            };
            g = self.shared.done.wait_timeout(g, wait).unwrap_or_else(|e| e.into_inner()).0;
        }
        self.shared.ended.load(Ordering::SeqCst)
    }

    /// Stops the workers and closes the session. Returns the log and the
    /// first worker error, if any.
    pub fn stop(mut self) -> (Vec<LogLine>, Option<Error>) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.work.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let err = self.shared.error.lock().unwrap_or_else(|e| e.into_inner()).take();
        let lines = self.shared.lock().stop().lines().to_vec();
        (lines, err)
    }
}

fn spawn_named(name: &str, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    thread::Builder::new().name(name.into()).spawn(f).expect("spawn worker thread")
}

fn producer(s: &Shared, interval: Duration) {
    while !s.finished() {
        s.lock().fill();
        thread::sleep(interval);
    }
}

fn reader(s: &Shared, mut sink: Box<dyn Sink>, speed: f64) {
    let (sr, frame) = {
        let g = s.lock();
        (g.sample_rate() as f64, g.config().frame_size)
    };
    let period = if speed.is_finite() && speed > 0.0 { Some(Duration::from_secs_f64(frame as f64 / sr / speed)) } else { None };
    let mut next = Instant::now();
    while !s.stop.load(Ordering::SeqCst) {
        let tick = s.lock().tick();
        if let Err(e) = sink.write(&tick.samples) {
            s.error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
            break;
        }
        if tick.ended {
            break;
        }
        if let Some(p) = period {
            next += p;
            if let Some(w) = next.checked_duration_since(Instant::now()) {
                thread::sleep(w);
            }
        }
    }
    if let Err(e) = sink.finish() {
        s.error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
    }
    s.ended.store(true, Ordering::SeqCst);
    s.work.notify_all();
    s.done.notify_all();
}

fn modifier(s: &Shared) {
    let mut g = s.lock();
    while !s.finished() {
        let Some(job) = g.next_job() else {
            g = s.work.wait_timeout(g, Duration::from_millis(100)).unwrap_or_else(|e| e.into_inner()).0;
            continue;
        };
        drop(g);
        let (job, plan) = job.plan();
        g = s.lock();
        if g.commit(job, plan) == super::CommitOutcome::Retry {
            // The frontier moved on while planning; let it settle briefly.
            drop(g);
            thread::sleep(Duration::from_millis(1));
            g = s.lock();
        }
    }
}
