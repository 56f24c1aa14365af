use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundsignal_core::modengine::SubtletyLevel;
use soundsignal_core::protocol::{run_watch, serve, Client, Endpoint, Handler, Listener, Reply, WireMessage};
use soundsignal_core::Result;

#[derive(Default)]
struct Recorder {
    signals: Mutex<Vec<(Option<SubtletyLevel>, String)>>,
    levels: Mutex<Vec<SubtletyLevel>>,
}

impl Handler for Recorder {
    fn signal(&self, level: Option<SubtletyLevel>, source: &str) -> Result<()> {
        self.signals.lock().unwrap().push((level, source.to_string()));
        Ok(())
    }

    fn set_level(&self, level: SubtletyLevel) -> Result<()> {
        self.levels.lock().unwrap().push(level);
        Ok(())
    }
}

fn listen() -> (Listener, Arc<Recorder>) {
    let rec = Arc::new(Recorder::default());
    let l = serve(&"127.0.0.1:0".parse().unwrap(), rec.clone(), false).unwrap();
    (l, rec)
}

fn wait_for(mut f: impl FnMut() -> bool) -> bool {
    let t = Instant::now();
    while t.elapsed() < Duration::from_secs(5) {
        if f() {
            return true;
        }
        thread::sleep(Duration::from_millis(10));
    }
    false
}

#[test]
fn concurrent_clients_are_each_acknowledged() {
    let (l, rec) = listen();
    let ep = l.endpoint().clone();
    let threads: Vec<_> = (0..3)
        .map(|i| {
            let ep = ep.clone();
            thread::spawn(move || Client::connect(&ep).unwrap().send(&WireMessage::signal(Some(2), format!("c{i}")).now()).unwrap())
        })
        .collect();
    for t in threads {
        assert_eq!(t.join().unwrap(), Reply::Ok);
    }
    let mut got: Vec<String> = rec.signals.lock().unwrap().iter().map(|s| s.1.clone()).collect();
    got.sort();
    assert_eq!(got, vec!["c0", "c1", "c2"]);
}

#[test]
fn ping_is_fast_and_bare_signal_has_no_level() {
    let (l, rec) = listen();
    let mut c = Client::connect(l.endpoint()).unwrap();
    let rtt = c.ping().unwrap();
    assert!(rtt < Duration::from_secs(3), "{rtt:?}");
    assert_eq!(c.send_line(r#"{"type":"signal"}"#).unwrap(), Reply::Ok);
    assert_eq!(c.send(&WireMessage::set_level(3)).unwrap(), Reply::Ok);
    assert_eq!(rec.signals.lock().unwrap()[0], (None, "client".to_string()));
    assert_eq!(rec.levels.lock().unwrap()[..], [SubtletyLevel::L3]);
}

#[test]
fn garbage_gets_an_error_and_the_connection_survives() {
    let (l, rec) = listen();
    let mut c = Client::connect(l.endpoint()).unwrap();
    match c.send_line(r#"{"type":"signal","level":7}"#).unwrap() {
        Reply::Error(e) => assert_eq!(e, "level out of range"),
        r => panic!("{r:?}"),
    }
    assert!(matches!(c.send_line("\u{7f}not json at all").unwrap(), Reply::Error(_)));
    // Invalid UTF-8 straight on the socket.
    let Endpoint::Tcp(addr) = l.endpoint() else { unreachable!() };
    let mut raw = TcpStream::connect(addr).unwrap();
    raw.write_all(b"\xff\xfe\xfd\n").unwrap();
    let mut buf = [0u8; 256];
    let n = raw.read(&mut buf).unwrap();
    assert!(std::str::from_utf8(&buf[..n]).unwrap().contains("\"ok\":false"));
    assert!(c.ping().is_ok());
    assert!(rec.signals.lock().unwrap().is_empty());
}

#[test]
fn malformed_fuzz_never_takes_the_listener_down() {
    let (l, rec) = listen();
    let mut c = Client::connect(l.endpoint()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let n = rng.gen_range(0..80);
        let mut s: String = (0..n).map(|_| rng.gen_range(' '..='~')).collect();
        if rng.gen_bool(0.3) {
            s = format!(r#"{{"type":"signal","level":{}}}"#, rng.gen_range(-5..9));
        }
        let s = s.replace('\n', " ");
        if s.trim().is_empty() {
            continue;
        }
        let _ = c.send_line(&s).unwrap();
    }
    assert!(c.ping().is_ok());
    assert!(rec.signals.lock().unwrap().iter().all(|(l, _)| l.is_some()));
}

#[test]
fn partial_line_at_disconnect_is_ignored() {
    let (l, rec) = listen();
    let Endpoint::Tcp(addr) = l.endpoint() else { unreachable!() };
    {
        let mut raw = TcpStream::connect(addr).unwrap();
        raw.write_all(br#"{"type":"signal","source":"half"#).unwrap();
    }
    thread::sleep(Duration::from_millis(200));
    let mut c = Client::connect(l.endpoint()).unwrap();
    c.ping().unwrap();
    assert!(rec.signals.lock().unwrap().is_empty());
}

#[test]
fn oversize_line_closes_the_connection() {
    let (l, rec) = listen();
    let Endpoint::Tcp(addr) = l.endpoint() else { unreachable!() };
    let mut raw = TcpStream::connect(addr).unwrap();
    let big = format!("{{\"type\":\"signal\",\"source\":\"{}\"}}\n", "x".repeat(5000));
    let _ = raw.write_all(big.as_bytes());
    raw.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut all = Vec::new();
    let _ = raw.read_to_end(&mut all);
    assert!(String::from_utf8_lossy(&all).contains("line too long"));
    assert!(rec.signals.lock().unwrap().is_empty());
}

#[test]
fn busy_port_and_remote_binding_are_refused() {
    let (l, _) = listen();
    let e = serve(l.endpoint(), Arc::new(Recorder::default()), false).err().unwrap();
    assert!(e.to_string().contains("cannot listen"), "{e}");
    let e = serve(&"0.0.0.0:0".parse().unwrap(), Arc::new(Recorder::default()), false).err().unwrap();
    assert!(e.to_string().contains("loopback"), "{e}");
}

#[cfg(unix)]
#[test]
fn unix_socket_endpoint() {
    let d = tempfile::tempdir().unwrap();
    let ep: Endpoint = format!("unix:{}", d.path().join("s.sock").display()).parse().unwrap();
    let rec = Arc::new(Recorder::default());
    let l = serve(&ep, rec.clone(), false).unwrap();
    let mut c = Client::connect(&ep).unwrap();
    assert_eq!(c.send(&WireMessage::signal(Some(1), "u")).unwrap(), Reply::Ok);
    drop(c);
    l.shutdown();
    assert!(!d.path().join("s.sock").exists());
    assert_eq!(rec.signals.lock().unwrap().len(), 1);
}

#[test]
fn watcher_sends_one_signal_per_new_file() {
    let (l, rec) = listen();
    let d = tempfile::tempdir().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let t = {
        let (p, ep, stop) = (d.path().to_path_buf(), l.endpoint().clone(), stop.clone());
        thread::spawn(move || run_watch(&p, Duration::from_millis(50), &ep, None, &stop).unwrap())
    };
    thread::sleep(Duration::from_millis(300));
    assert!(rec.signals.lock().unwrap().is_empty());
    std::fs::write(d.path().join("mail-1.eml"), "hi").unwrap();
    assert!(wait_for(|| rec.signals.lock().unwrap().len() == 1));
    thread::sleep(Duration::from_millis(300));
    stop.store(true, std::sync::atomic::Ordering::SeqCst);
    assert_eq!(t.join().unwrap(), 1);
    assert_eq!(rec.signals.lock().unwrap()[..], [(None, "watch:mail-1.eml".to_string())]);
}
