//! Runs an external compressor as a second stage.
//!
//! A command template is run through `sh -c`. If it mentions `{in}` the input is
//! written to a temporary file whose path replaces the marker; if it mentions
//! `{out}` the result is read back from a temporary file, otherwise from
//! standard output. Without `{in}` the input is fed on standard input.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;

use super::LrError;

fn shell_quote(path: &std::path::Path) -> String {
    format!("'{}'", path.to_string_lossy().replace('\'', r"'\''"))
}

/// Checks that the program a template starts with can be found, so a missing
/// tool is reported before any work is done.
pub fn probe(template: &str) -> Result<(), LrError> {
    let program = template.split_whitespace().next().unwrap_or_default();
    let found = !program.is_empty()
        && Command::new("sh")
            .arg("-c")
            .arg("command -v \"$1\" >/dev/null")
            .arg("sh")
            .arg(program)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success());
    if found {
        Ok(())
    } else {
        Err(LrError::ExternalBackendFailed {
            command: template.to_string(),
            reason: format!("`{program}` not found"),
        })
    }
}

pub fn run(template: &str, input: &[u8]) -> Result<Vec<u8>, LrError> {
    let fail = |reason: String| LrError::ExternalBackendFailed {
        command: template.to_string(),
        reason,
    };
    let dir = tempfile::tempdir().map_err(|e| fail(format!("temp dir: {e}")))?;
    let in_path = dir.path().join("in");
    let out_path = dir.path().join("out");
    let uses_in = template.contains("{in}");
    let uses_out = template.contains("{out}");
    if uses_in {
        std::fs::write(&in_path, input).map_err(|e| fail(format!("writing input: {e}")))?;
    }
    let command = template
        .replace("{in}", &shell_quote(&in_path))
        .replace("{out}", &shell_quote(&out_path));

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(if uses_in { Stdio::null() } else { Stdio::piped() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(format!("spawn: {e}")))?;

    let feeder = child.stdin.take().map(|mut stdin| {
        let data = input.to_vec();
        thread::spawn(move || stdin.write_all(&data))
    });
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let mut err_pipe = child.stderr.take().expect("stderr is piped");
    let err_reader = thread::spawn(move || {
        let _ = err_pipe.read_to_end(&mut stderr);
        stderr
    });
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_end(&mut stdout)
        .map_err(|e| fail(format!("reading output: {e}")))?;
    let status = child.wait().map_err(|e| fail(format!("wait: {e}")))?;
    let stderr = err_reader.join().unwrap_or_default();
    if let Some(feeder) = feeder {
        match feeder.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) if status.success() => return Err(fail(format!("broken pipe: {e}"))),
            _ => {}
        }
    }
    if !status.success() {
        let msg = String::from_utf8_lossy(&stderr);
        return Err(fail(format!("{status}: {}", msg.trim())));
    }
    if uses_out {
        std::fs::read(&out_path).map_err(|e| fail(format!("reading {{out}}: {e}")))
    } else {
        Ok(stdout)
    }
}
