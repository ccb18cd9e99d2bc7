//! Line protocol spoken with external evaluator processes.
//!
//! The engine starts the evaluator with two extra environment variables,
//! `FORGE_TRIAL_ID` and `FORGE_PARAMS_FILE` (path of the envelope JSON), and
//! then reads its standard output line by line:
//!
//! ```text
//! REPORT <step:uint> <value:float>    intermediate objective, steps strictly increasing
//! FINAL <value:float>                 final objective, the last line before exit
//! INFO <single-line JSON object>      extra metrics, stored as extra_info
//! ```
//!
//! After every `REPORT` the engine writes `CONTINUE` or `STOP` to the
//! evaluator's standard input. After `STOP` the evaluator should exit 0
//! without `FINAL`; the trial is recorded as pruned at that step.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::space::{ParamVector, SearchSpace};

/// Longest accepted protocol line, terminator excluded.
pub const MAX_LINE: usize = 64 * 1024;

pub const ENV_TRIAL_ID: &str = "FORGE_TRIAL_ID";
pub const ENV_PARAMS_FILE: &str = "FORGE_PARAMS_FILE";

/// The document handed to an evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub trial_id: u64,
    /// Seed for the evaluator's own randomness.
    pub seed: u64,
    /// Every parameter, integers written without a fractional part.
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_every: Option<u64>,
}

impl Envelope {
    pub fn new(trial_id: u64, seed: u64, params: &ParamVector, space: &SearchSpace) -> Envelope {
        Envelope {
            trial_id,
            seed,
            params: params.to_json(space),
            max_steps: None,
            report_every: None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelopes serialize")
    }

    /// Parameter values as floats.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).and_then(Value::as_f64)
    }

    pub fn read(path: &Path) -> Result<Envelope, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// One parsed line from an evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum ChildLine {
    Report { step: u64, value: f64 },
    Final(f64),
    Info(Map<String, Value>),
}

fn parse_value(token: &str) -> Option<f64> {
    // Rust's float grammar also admits "inf" and "NaN"; the protocol does not
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses one protocol line (without its LF).
pub fn parse_child_line(line: &str) -> Result<ChildLine, String> {
    let malformed = || format!("malformed protocol line: `{line}`");
    if let Some(rest) = line.strip_prefix("INFO ") {
        return match serde_json::from_str::<Value>(rest) {
            Ok(Value::Object(map)) => Ok(ChildLine::Info(map)),
            _ => Err(malformed()),
        };
    }
    let tokens: Vec<&str> = line.split(' ').collect();
    match tokens.as_slice() {
        ["REPORT", step, value] => {
            let step = step.parse::<u64>().ok().filter(|_| step.bytes().all(|b| b.is_ascii_digit()));
            match (step, parse_value(value)) {
                (Some(step), Some(value)) => Ok(ChildLine::Report { step, value }),
                _ => Err(malformed()),
            }
        }
        ["FINAL", value] => parse_value(value).map(ChildLine::Final).ok_or_else(malformed),
        _ => Err(malformed()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
    /// The host can no longer record the trial; kill the evaluator.
    Abort,
}

impl Decision {
    pub fn reply(self) -> &'static str {
        match self {
            Decision::Continue => "CONTINUE",
            Decision::Stop | Decision::Abort => "STOP",
        }
    }
}

/// How a trial ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed {
        objective: f64,
        extra_info: Option<Map<String, Value>>,
    },
    Pruned {
        step: u64,
    },
    Failed {
        reason: String,
    },
}

impl Outcome {
    pub fn failed(reason: impl Into<String>) -> Outcome {
        Outcome::Failed { reason: reason.into() }
    }
}

/// Per-trial exchange settings.
#[derive(Debug, Clone)]
pub struct ExchangeOptions {
    /// Kill and fail the evaluator after this long; no limit by default.
    pub timeout: Option<Duration>,
    /// Treat `FINAL` without any earlier `REPORT` as a protocol error.
    pub require_reports: bool,
    /// How long an evaluator may take to exit after `STOP`.
    pub stop_grace: Duration,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        ExchangeOptions {
            timeout: None,
            require_reports: false,
            stop_grace: Duration::from_secs(10),
        }
    }
}

/// Tracks the protocol state of one exchange independently of transport.
#[derive(Debug, Default)]
pub struct Exchange {
    require_reports: bool,
    last_step: Option<u64>,
    n_reports: usize,
    final_value: Option<f64>,
    info: Option<Map<String, Value>>,
    stopped_at: Option<u64>,
}

/// What the transport should do after a line.
#[derive(Debug, PartialEq)]
pub enum Step {
    /// Nothing to send.
    Quiet,
    /// Send this reply.
    Reply(Decision),
    /// Give up on the trial.
    Fail(String),
}

impl Exchange {
    pub fn new(require_reports: bool) -> Exchange {
        Exchange { require_reports, ..Exchange::default() }
    }

    pub fn stopped_at(&self) -> Option<u64> {
        self.stopped_at
    }

    pub fn n_reports(&self) -> usize {
        self.n_reports
    }

    /// Feeds one line; `on_report` decides the reply to each report.
    pub fn feed(&mut self, line: &str, on_report: &mut dyn FnMut(u64, f64) -> Decision) -> Step {
        if self.stopped_at.is_some() {
            // output racing the STOP reply is drained and ignored
            return Step::Quiet;
        }
        if self.final_value.is_some() {
            return Step::Fail(format!("output after FINAL: `{line}`"));
        }
        match parse_child_line(line) {
            Err(e) => Step::Fail(e),
            Ok(ChildLine::Report { step, value }) => {
                if let Some(last) = self.last_step.filter(|&last| step <= last) {
                    return Step::Fail(format!("report step {step} does not follow step {last}: `{line}`"));
                }
                self.last_step = Some(step);
                self.n_reports += 1;
                let decision = on_report(step, value);
                if decision != Decision::Continue {
                    self.stopped_at = Some(step);
                }
                Step::Reply(decision)
            }
            Ok(ChildLine::Final(value)) => {
                if self.require_reports && self.n_reports == 0 {
                    return Step::Fail(format!("FINAL before any REPORT: `{line}`"));
                }
                self.final_value = Some(value);
                Step::Quiet
            }
            Ok(ChildLine::Info(map)) => {
                self.info.get_or_insert_with(Map::new).extend(map);
                Step::Quiet
            }
        }
    }

    /// Outcome once the evaluator has exited with `status`.
    pub fn finish(self, status: ExitStatus) -> Outcome {
        if let Some(step) = self.stopped_at {
            return Outcome::Pruned { step };
        }
        if !status.success() {
            return Outcome::failed(describe_status(status));
        }
        match self.final_value {
            Some(objective) => Outcome::Completed { objective, extra_info: self.info },
            None => Outcome::failed("exited without FINAL"),
        }
    }
}

fn describe_status(status: ExitStatus) -> String {
    if let Some(code) = status.code() {
        return format!("exit={code}");
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(signal) = status.signal() {
            return format!("signal={signal}");
        }
    }
    format!("{status}")
}

/// Splits a command line on unquoted whitespace, honoring single and double
/// quotes and backslash escapes. No shell is involved.
pub fn split_command(command: &str) -> Result<Vec<String>, String> {
    match shlex::split(command) {
        Some(words) if !words.is_empty() => Ok(words),
        Some(_) => Err("evaluator command is empty".into()),
        None => Err(format!("evaluator command has unbalanced quotes: {command}")),
    }
}

enum Incoming {
    Line(String),
    TooLong,
    NotText,
    Closed,
}

fn spawn_reader(stdout: impl Read + Send + 'static) -> Receiver<Incoming> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            let mut buf = Vec::new();
            let read = (&mut reader).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut buf);
            let message = match read {
                Ok(0) | Err(_) => Incoming::Closed,
                Ok(_) => {
                    if buf.last() == Some(&b'\n') {
                        buf.pop();
                    }
                    if buf.len() > MAX_LINE {
                        Incoming::TooLong
                    } else {
                        match String::from_utf8(buf) {
                            Ok(line) if line.is_ascii() => Incoming::Line(line),
                            _ => Incoming::NotText,
                        }
                    }
                }
            };
            let last = matches!(message, Incoming::Closed | Incoming::TooLong | Incoming::NotText);
            if tx.send(message).is_err() || last {
                return;
            }
        }
    });
    rx
}

fn spawn_writer(mut stdin: impl Write + Send + 'static) -> Sender<&'static str> {
    let (tx, rx) = mpsc::channel::<&'static str>();
    thread::spawn(move || {
        for reply in rx {
            // an evaluator that ignores stdin may already be gone
            if stdin.write_all(reply.as_bytes()).and_then(|_| stdin.write_all(b"\n")).and_then(|_| stdin.flush()).is_err() {
                break;
            }
        }
    });
    tx
}

fn kill(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Runs one evaluator process to completion.
///
/// The envelope is written to `envelope_path` first. `on_report` is called
/// for every accepted report, in order, and its decision is sent back.
pub fn run_process(
    command: &str,
    envelope: &Envelope,
    envelope_path: &Path,
    options: &ExchangeOptions,
    on_report: &mut dyn FnMut(u64, f64) -> Decision,
) -> Outcome {
    let argv = match split_command(command) {
        Ok(argv) => argv,
        Err(e) => return Outcome::failed(e),
    };
    if let Some(parent) = envelope_path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    if let Err(e) = std::fs::write(envelope_path, envelope.to_json_pretty()) {
        return Outcome::failed(format!("cannot write envelope {}: {e}", envelope_path.display()));
    }
    let spawned = Command::new(&argv[0])
        .args(&argv[1..])
        .env(ENV_TRIAL_ID, envelope.trial_id.to_string())
        .env(ENV_PARAMS_FILE, envelope_path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn();
    let mut child = match spawned {
        Ok(child) => child,
        Err(e) => return Outcome::failed(format!("cannot start `{}`: {e}", argv[0])),
    };
    let lines = spawn_reader(child.stdout.take().expect("piped stdout"));
    let replies = spawn_writer(child.stdin.take().expect("piped stdin"));

    let started = Instant::now();
    let mut exchange = Exchange::new(options.require_reports);
    let mut stop_deadline: Option<Instant> = None;
    loop {
        let deadline = match (options.timeout.map(|t| started + t), stop_deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let received = match deadline {
            Some(deadline) => lines.recv_timeout(deadline.saturating_duration_since(Instant::now())),
            None => lines.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match received {
            Ok(Incoming::Line(line)) => match exchange.feed(&line, on_report) {
                Step::Quiet => {}
                Step::Reply(decision) => {
                    let _ = replies.send(decision.reply());
                    match decision {
                        Decision::Continue => {}
                        Decision::Stop => stop_deadline = Some(Instant::now() + options.stop_grace),
                        Decision::Abort => {
                            kill(&mut child);
                            return Outcome::failed("aborted by the engine");
                        }
                    }
                }
                Step::Fail(reason) => {
                    kill(&mut child);
                    return Outcome::failed(reason);
                }
            },
            Ok(Incoming::TooLong) => {
                kill(&mut child);
                return Outcome::failed(format!("protocol line longer than {MAX_LINE} bytes"));
            }
            Ok(Incoming::NotText) => {
                kill(&mut child);
                return Outcome::failed("protocol line is not ASCII text");
            }
            Ok(Incoming::Closed) | Err(RecvTimeoutError::Disconnected) => break,
            Err(RecvTimeoutError::Timeout) => {
                kill(&mut child);
                if exchange.stopped_at().is_some() {
                    return exchange.finish(success_status());
                }
                return Outcome::failed(format!("timeout after {:.1}s", started.elapsed().as_secs_f64()));
            }
        }
    }
    drop(replies);
    // stdout is closed; the process is exiting or has exited
    let status = match child.wait() {
        Ok(status) => status,
        Err(e) => return Outcome::failed(format!("wait failed: {e}")),
    };
    exchange.finish(status)
}

fn success_status() -> ExitStatus {
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        ExitStatus::from_raw(0)
    }
    #[cfg(not(unix))]
    {
        Command::new("cmd").args(["/C", "exit 0"]).status().expect("cmd runs")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        assert_eq!(parse_child_line("REPORT 10 -54.25"), Ok(ChildLine::Report { step: 10, value: -54.25 }));
        assert_eq!(parse_child_line("FINAL 172.43"), Ok(ChildLine::Final(172.43)));
        assert_eq!(parse_child_line("REPORT 0 1e-3"), Ok(ChildLine::Report { step: 0, value: 1e-3 }));
        let info = parse_child_line(r#"INFO {"episodes": 12, "note": "a b"}"#).unwrap();
        assert!(matches!(info, ChildLine::Info(m) if m.len() == 2));
        for bad in [
            "REPORT 10",
            "REPORT -1 2",
            "REPORT +1 2",
            "REPORT 1 abc",
            "REPORT 1 NaN",
            "REPORT 1 inf",
            "REPORT  1 2",
            "FINAL",
            "FINAL 1 2",
            "INFO [1]",
            "INFO {",
            "report 1 2",
            "",
            "hello",
        ] {
            let err = parse_child_line(bad).unwrap_err();
            assert!(err.contains(&format!("`{bad}`")), "{err}");
        }
    }

    #[test]
    fn float_tokens_round_trip() {
        for v in [0.1f64, 172.43, -54.25, 1.0 / 3.0, 6.02214076e23, -1e-300] {
            let ChildLine::Final(back) = parse_child_line(&format!("FINAL {v}")).unwrap() else { panic!() };
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn exchange_rules() {
        let mut cont = |_: u64, _: f64| Decision::Continue;
        let mut ex = Exchange::new(false);
        assert_eq!(ex.feed("REPORT 1 1.0", &mut cont), Step::Reply(Decision::Continue));
        assert!(matches!(ex.feed("REPORT 1 2.0", &mut cont), Step::Fail(_)));

        let mut ex = Exchange::new(true);
        assert!(matches!(ex.feed("FINAL 1.0", &mut cont), Step::Fail(m) if m.contains("FINAL before")));

        let mut ex = Exchange::new(false);
        assert_eq!(ex.feed("FINAL 1.0", &mut cont), Step::Quiet);
        assert!(matches!(ex.feed("INFO {}", &mut cont), Step::Fail(m) if m.contains("after FINAL")));

        let mut stop = |step: u64, _: f64| if step >= 3 { Decision::Stop } else { Decision::Continue };
        let mut ex = Exchange::new(false);
        for s in 1..=3 {
            ex.feed(&format!("REPORT {s} 0.5"), &mut stop);
        }
        assert_eq!(ex.feed("REPORT 4 0.5", &mut stop), Step::Quiet);
        assert_eq!(ex.n_reports(), 3);
        assert_eq!(ex.finish(success_status()), Outcome::Pruned { step: 3 });
    }

    #[test]
    fn command_splitting() {
        assert_eq!(split_command("python3 train.py --tag 'a b'").unwrap(), vec!["python3", "train.py", "--tag", "a b"]);
        assert_eq!(split_command(r#"eval "x y" z\ w"#).unwrap(), vec!["eval", "x y", "z w"]);
        assert!(split_command("   ").is_err());
        assert!(split_command("a 'b").is_err());
    }
}
