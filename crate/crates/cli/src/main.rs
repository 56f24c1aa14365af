use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use soundsignal_core::analysis::{load_track, AnalysisParams, ProfileStore};
use soundsignal_core::harness::{self, DetectorConfig, InjectOptions, InjectionManifest, ScoreReport};
use soundsignal_core::modengine::SubtletyLevel;
use soundsignal_core::protocol::{run_watch, serve, Client, Endpoint, Reply, WireMessage};
use soundsignal_core::server::{load_playlist, Runtime, RuntimeOptions, Session, SessionConfig, SessionLog, SinkSpec, SystemClock};
use soundsignal_core::{read_wav, write_wav};

#[derive(Parser)]
#[command(name = "soundsignal", version, about = "Notifications conveyed by editing your own music as it plays")]
struct Cli {
    /// Profile cache directory.
    #[arg(long, global = true, env = "SOUNDSIGNAL_STORE", default_value = ".soundsignal")]
    store: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse wave files and cache their profiles.
    Preprocess(PreprocessArgs),
    /// Play a playlist and accept notifications from clients.
    Play(PlayArgs),
    /// Render a track with seeded test modifications and write a manifest.
    Inject(InjectArgs),
    /// Find where a rendered file departs from its original; prints click times.
    Detect(DetectArgs),
    /// Score click times against a manifest.
    Score(ScoreArgs),
    /// Send a signal whenever a file or directory changes.
    Watch(WatchArgs),
    /// Send one message to a running player.
    Send(SendArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Genre keyword applied to every track.
    #[arg(long, conflicts_with = "auto")]
    genre: Option<String>,
    /// Pick the category from the audio.
    #[arg(long)]
    auto: bool,
    /// Analysis parameters (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(required = true)]
    playlist: Vec<PathBuf>,
    /// Level for signals that do not carry one.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: u8,
    #[arg(long, default_value_t = Endpoint::default())]
    endpoint: Endpoint,
    /// Accept clients from other hosts.
    #[arg(long)]
    allow_remote: bool,
    /// Session log file.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Ask for a task description before playback starts.
    #[arg(long)]
    task_prompt: bool,
    /// Task description, without prompting.
    #[arg(long, conflicts_with = "task_prompt")]
    task: Option<String>,
    /// null or wav:PATH
    #[arg(long, default_value = "null")]
    output: SinkSpec,
    /// Playback speed relative to real time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Stop after this many seconds of wall time.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct InjectArgs {
    track: PathBuf,
    #[arg(long, default_value_t = 2)]
    per_level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Insert the stock notification tone instead.
    #[arg(long)]
    control: bool,
    /// Rendered audio; defaults to TRACK.injected.wav.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest; defaults to the rendered path with a .json extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Click latency allowed when scoring, seconds.
    #[arg(long, default_value_t = 5.0)]
    window: f64,
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    original: PathBuf,
    rendered: PathBuf,
    /// Write click times here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    manifest: PathBuf,
    /// Click times: a JSON array or one per line.
    clicks: PathBuf,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct WatchArgs {
    path: PathBuf,
    #[arg(long, default_value_t = Endpoint::default())]
    endpoint: Endpoint,
    /// Poll interval, seconds.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: Option<u8>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SendKind {
    Signal,
    SetLevel,
    Ping,
}

#[derive(Args)]
struct SendArgs {
    #[arg(value_enum)]
    kind: SendKind,
    #[arg(long, default_value_t = Endpoint::default())]
    endpoint: Endpoint,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: Option<u8>,
    #[arg(long, default_value = "cli")]
    source: String,
}

fn read_params(path: Option<&Path>) -> anyhow::Result<AnalysisParams> {
    let Some(p) = path else { return Ok(AnalysisParams::default()) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let params: AnalysisParams = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
    params.validate()?;
    Ok(params)
}

fn preprocess(store: &ProfileStore, a: PreprocessArgs) -> anyhow::Result<bool> {
    if !a.auto && a.genre.is_none() {
        log::info!("no --genre given; categories come from the audio");
    }
    let params = read_params(a.params.as_deref())?;
    let keyword = a.genre.as_deref();
    println!("{:<24} {:<10} {:>6} {:>6} {:>6}  status", "track", "category", "bounds", "beats", "jumps");
    let mut ok = true;
    for path in &a.paths {
        match store.ensure_file(path, keyword, &params) {
            Ok((p, status)) => println!(
                "{:<24} {:<10} {:>6} {:>6} {:>6}  {}",
                p.track_id,
                p.category.to_string(),
                p.segment_bounds.len(),
                p.beats.len(),
                p.jump_graph.edge_count(),
                status.as_str()
            ),
            Err(e) => {
                ok = false;
                println!("{:<24} failed: {e}", path.display());
            }
        }
    }
    Ok(ok)
}

fn play(store: &ProfileStore, a: PlayArgs) -> anyhow::Result<bool> {
    if !(a.speed > 0.0) {
        bail!("--speed must be positive");
    }
    let params = read_params(a.params.as_deref())?;
    let entries = load_playlist(&a.playlist, store, &params)?;
    let (sr, nc) = (entries[0].track.sample_rate(), entries[0].track.channels());
    let sink = a.output.open(sr, nc)?;
    let log = match &a.log {
        Some(p) => SessionLog::to_file(p).with_context(|| format!("opening log {}", p.display()))?,
        None => SessionLog::new(),
    };
    let task = if a.task_prompt {
        eprint!("Task: ");
        std::io::stderr().flush()?;
        let mut line = String::new();
        std::io::stdin().lock().read_line(&mut line)?;
        Some(line.trim().to_string())
    } else {
        a.task.clone()
    };
    let level = SubtletyLevel::try_from(a.level)?;
    let cfg = SessionConfig { default_level: level, seed: a.seed, ..SessionConfig::default() };
    let clock = Arc::new(SystemClock);
    let session = Session::start(entries, cfg, clock.clone(), log)?;
    let runtime = Runtime::spawn(session, clock, sink, RuntimeOptions { speed: a.speed, ..RuntimeOptions::default() });
    let handle = runtime.handle();
    if let Some(t) = task.filter(|t| !t.is_empty()) {
        handle.task(&t)?;
    }
    let listener = match serve(&a.endpoint, Arc::new(handle), a.allow_remote) {
        Ok(l) => l,
        Err(e) => {
            runtime.stop();
            return Err(e.into());
        }
    };
    eprintln!("playing {} track(s); listening on {}", a.playlist.len(), listener.endpoint());
    let ended = runtime.wait(a.duration.map(Duration::from_secs_f64));
    listener.shutdown();
    let (lines, err) = runtime.stop();
    let edits = lines.iter().filter(|l| l.event.as_str() == "EDIT").count();
    eprintln!("{} after {} log events, {edits} edits", if ended { "finished" } else { "stopped" }, lines.len());
    if let Some(e) = err {
        bail!("playback failed: {e}");
    }
    Ok(true)
}

fn inject(store: &ProfileStore, a: InjectArgs) -> anyhow::Result<bool> {
    let (wave, format) = read_wav(&a.track)?;
    let track = load_track(&a.track)?;
    let profile = if a.control {
        None
    } else {
        match store.current_for_file(&a.track, &read_params(a.params.as_deref())?)? {
            Ok((_, p)) => Some(p),
            Err(_) => bail!("track {}: no current profile; run preprocess", a.track.display()),
        }
    };
    let opts = InjectOptions { per_level: a.per_level, seed: a.seed, control: a.control, window_s: a.window, ..InjectOptions::default() };
    let inj = harness::inject(&track.id, &wave, profile.as_ref(), &opts)?;
    let out = a.out.unwrap_or_else(|| a.track.with_extension("injected.wav"));
    let manifest = a.manifest.unwrap_or_else(|| out.with_extension("json"));
    write_wav(&out, &inj.audio, format)?;
    inj.manifest.write(&manifest)?;
    println!("{:>9} {:>9} {:>8}  kind", "at_s", "end_s", "level");
    for e in &inj.manifest.events {
        let end = e.end_s.map_or("-".to_string(), |t| format!("{t:.3}"));
        println!("{:>9.3} {:>9} {:>8}  {}", e.ts_s, end, e.level.to_string(), e.kind.as_deref().unwrap_or("-"));
    }
    println!("wrote {} and {}", out.display(), manifest.display());
    Ok(true)
}

fn detect(a: DetectArgs) -> anyhow::Result<bool> {
    let (orig, _) = read_wav(&a.original)?;
    let (rend, _) = read_wav(&a.rendered)?;
    let cfg = DetectorConfig::default();
    let devs = harness::detect(&orig, &rend, &cfg)?;
    let text: String = harness::clicks(&devs, &cfg).iter().map(|c| format!("{c:.3}\n")).collect();
    match a.out {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    for d in &devs {
        log::info!("deviation {:.2}..{:.2} s rms {:.4}", d.start_s, d.end_s, d.rms());
    }
    Ok(true)
}

fn print_report(r: &ScoreReport) {
    println!("{:<8} {:>6} {:>5} {:>9}", "level", "events", "hits", "accuracy");
    for l in &r.levels {
        println!("{:<8} {:>6} {:>5} {:>9.3}", l.level.to_string(), l.events, l.hits, l.accuracy);
    }
    println!("{:<8} {:>6} {:>5} {:>9.3}", "all", r.events, r.hits, r.accuracy);
    println!("false positives: {}", r.false_positives);
}

fn score(a: ScoreArgs) -> anyhow::Result<bool> {
    let manifest = InjectionManifest::read(&a.manifest).with_context(|| format!("manifest {}", a.manifest.display()))?;
    let text = std::fs::read_to_string(&a.clicks).with_context(|| format!("reading {}", a.clicks.display()))?;
    let clicks = harness::parse_clicks(&text)?;
    let report = harness::score(&manifest, &clicks);
    print_report(&report);
    if let Some(p) = a.json_out {
        std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(true)
}

fn watch(a: WatchArgs) -> anyhow::Result<bool> {
    if !(a.interval > 0.0) {
        bail!("--interval must be positive");
    }
    let stop = AtomicBool::new(false);
    let sent = run_watch(&a.path, Duration::from_secs_f64(a.interval), &a.endpoint, a.level, &stop)?;
    eprintln!("sent {sent} signal(s)");
    Ok(true)
}

fn send(a: SendArgs) -> anyhow::Result<bool> {
    let msg = match a.kind {
        SendKind::Signal => WireMessage::signal(a.level, a.source).now(),
        SendKind::SetLevel => WireMessage::set_level(a.level.context("set-level needs --level")?),
        SendKind::Ping => WireMessage::ping(),
    };
    let mut c = Client::connect(&a.endpoint)?;
    match c.send(&msg)? {
        Reply::Error(e) => bail!("server refused: {e}"),
        r => println!("{}", r.encode().trim_end()),
    }
    Ok(true)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let store = || ProfileStore::open(&cli.store);
    match cli.cmd {
        Command::Preprocess(a) => preprocess(&store()?, a),
        Command::Play(a) => play(&store()?, a),
        Command::Inject(a) => inject(&store()?, a),
        Command::Detect(a) => detect(a),
        Command::Score(a) => score(a),
        Command::Watch(a) => watch(a),
        Command::Send(a) => send(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
