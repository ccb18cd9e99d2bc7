//! Evaluator programs speaking the line protocol on stdin/stdout, as run
//! by `forge eval ...`.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::time::Duration;

use crate::protocol::{Decision, Envelope, ENV_PARAMS_FILE, ENV_TRIAL_ID};
use crate::space::ParamVector;

use super::{SurrogateCurveModel, TestFunction};

/// Loads the envelope named by `FORGE_PARAMS_FILE`.
pub fn envelope_from_env() -> Result<Envelope, String> {
    let path = std::env::var_os(ENV_PARAMS_FILE).ok_or_else(|| format!("{ENV_PARAMS_FILE} is not set"))?;
    Envelope::read(Path::new(&path))
}

fn params_of(envelope: &Envelope) -> ParamVector {
    envelope
        .params
        .iter()
        .filter_map(|(k, v)| v.as_f64().map(|v| (k.clone(), v)))
        .collect()
}

/// Writes a report and waits for the engine's reply. A closed stdin counts
/// as CONTINUE.
fn exchange_report(out: &mut impl Write, input: &mut impl BufRead, step: u64, value: f64) -> Decision {
    if writeln!(out, "REPORT {step} {value}").and_then(|_| out.flush()).is_err() {
        return Decision::Abort;
    }
    let mut reply = String::new();
    match input.read_line(&mut reply) {
        Ok(0) | Err(_) => Decision::Continue,
        Ok(_) if reply.trim_end() == "STOP" => Decision::Stop,
        Ok(_) => Decision::Continue,
    }
}

fn fail(message: String) -> i32 {
    eprintln!("{message}");
    1
}

/// Surrogate curve: reports every step, honors STOP, then FINAL.
pub fn surrogate(model: &SurrogateCurveModel) -> i32 {
    let envelope = match envelope_from_env() {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let mut model = model.clone();
    if let Some(n) = envelope.max_steps {
        model.n_steps = n;
    }
    let stdout = io::stdout();
    let stdin = io::stdin();
    let mut out = stdout.lock();
    let mut input = stdin.lock();
    let outcome = model.run(&params_of(&envelope), envelope.seed, envelope.report_every.unwrap_or(1), &mut |step, value| {
        exchange_report(&mut out, &mut input, step, value)
    });
    match outcome {
        crate::protocol::Outcome::Completed { objective, .. } => {
            let _ = writeln!(out, "FINAL {objective}");
            0
        }
        crate::protocol::Outcome::Pruned { .. } => 0,
        crate::protocol::Outcome::Failed { reason } => fail(reason),
    }
}

/// A test function of the parameters in declaration order; one FINAL line.
pub fn function(function: TestFunction) -> i32 {
    let envelope = match envelope_from_env() {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let x: Vec<f64> = envelope.params.values().filter_map(|v| v.as_f64()).collect();
    match function.eval(&x) {
        Ok(v) => {
            println!("FINAL {v}");
            0
        }
        Err(e) => fail(e),
    }
}

/// Sleeps, then reports the sum of the parameters as FINAL.
pub fn sleep(duration: Duration) -> i32 {
    let envelope = match envelope_from_env() {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    std::thread::sleep(duration);
    let sum: f64 = envelope.params.values().filter_map(|v| v.as_f64()).sum();
    println!("FINAL {sum}");
    0
}

/// Replays a recorded transcript for the current trial.
///
/// Transcript lines: `> TEXT` writes TEXT to stdout, `< TEXT` reads one line
/// from stdin and requires it to equal TEXT, `exit N` exits with status N.
/// Blank lines and lines starting with `#` are skipped. The transcript is
/// `trial-<FORGE_TRIAL_ID>.txt` in `dir`, falling back to `default.txt`.
pub fn replay(dir: &Path) -> i32 {
    let trial_id = std::env::var(ENV_TRIAL_ID).unwrap_or_default();
    let specific = dir.join(format!("trial-{trial_id}.txt"));
    let path = if specific.exists() { specific } else { dir.join("default.txt") };
    let script = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    let stdout = io::stdout();
    let stdin = io::stdin();
    let mut out = stdout.lock();
    let mut input = stdin.lock();
    for (n, line) in script.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(text) = line.strip_prefix("> ") {
            if writeln!(out, "{text}").and_then(|_| out.flush()).is_err() {
                return fail(format!("{}:{}: stdout closed", path.display(), n + 1));
            }
        } else if let Some(expected) = line.strip_prefix("< ") {
            let mut reply = String::new();
            let _ = input.read_line(&mut reply);
            if reply.trim_end_matches('\n') != expected {
                return fail(format!("{}:{}: expected `{expected}`, got `{}`", path.display(), n + 1, reply.trim_end()));
            }
        } else if let Some(code) = line.strip_prefix("exit ") {
            let _ = out.flush();
            return code.trim().parse().unwrap_or(1);
        } else {
            return fail(format!("{}:{}: unknown transcript line", path.display(), n + 1));
        }
    }
    0
}
