//! Artifact headers and config recovery.
//!
//! JSON artifacts carry `ponly_version`, `command` and `config` keys; JSON-lines
//! artifacts carry them in their first line; CSV artifacts carry them as
//! `# ponly <version>`, `# command: <name>` and `# config: <json>` comment lines.
//! `--config` accepts a bare config object or any of these artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

const CONFIG_PREFIX: &str = "config: ";
const COMMAND_PREFIX: &str = "command: ";

/// Comment lines (without the leading `# `) heading a CSV artifact.
pub fn csv_header<C: Serialize>(command: &str, config: &C) -> Vec<String> {
    vec![
        format!("ponly {}", ponly::VERSION),
        format!("{COMMAND_PREFIX}{command}"),
        format!("{CONFIG_PREFIX}{}", to_json(config)),
    ]
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn split_embedded(v: Value) -> (Option<String>, Value) {
    match v {
        Value::Object(mut m) if m.contains_key("config") && m.contains_key("ponly_version") => {
            let command = m.get("command").and_then(Value::as_str).map(str::to_string);
            (command, m.remove("config").expect("checked"))
        }
        other => (None, other),
    }
}

/// Reads a config from `path`, which may be a config file or an artifact.
pub fn load_config<C: DeserializeOwned>(path: &Path, command: &str) -> Result<C, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let (found, value) = if let Ok(v) = serde_json::from_str::<Value>(&text) {
        split_embedded(v)
    } else if let Some(v) = text
        .lines()
        .next()
        .and_then(|l| serde_json::from_str::<Value>(l).ok())
    {
        split_embedded(v)
    } else {
        let comment = |prefix: &str| {
            text.lines()
                .filter_map(|l| l.strip_prefix("# "))
                .find_map(|l| l.strip_prefix(prefix))
                .map(str::to_string)
        };
        let cfg = comment(CONFIG_PREFIX)
            .ok_or_else(|| CliError::Input(format!("{} holds no JSON config", path.display())))?;
        let v = serde_json::from_str(&cfg)
            .map_err(|e| CliError::Input(format!("embedded config in {}: {e}", path.display())))?;
        (comment(COMMAND_PREFIX), v)
    };
    if let Some(found) = found {
        if found != command {
            return Err(CliError::Input(format!(
                "{} was produced by `{found}`, not `{command}`",
                path.display()
            )));
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

/// Writes `bytes` to `out`, or to stdout when no path is given.
pub fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Cfg {
        a: u32,
    }

    fn load(text: &str) -> Result<Cfg, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, text).unwrap();
        load_config(&p, "fit")
    }

    #[test]
    fn bare_and_embedded() {
        assert_eq!(load(r#"{"a": 3}"#).unwrap(), Cfg { a: 3 });
        let art = r#"{"ponly_version": "0", "command": "fit", "config": {"a": 4}, "fit": {}}"#;
        assert_eq!(load(art).unwrap(), Cfg { a: 4 });
        let lines = "{\"ponly_version\":\"0\",\"command\":\"fit\",\"config\":{\"a\":5}}\n{\"check\":1}\n";
        assert_eq!(load(lines).unwrap(), Cfg { a: 5 });
        let csv = format!("# {}\n# command: fit\n# config: {{\"a\":6}}\ny,x1\n1,0\n", "ponly 0");
        assert_eq!(load(&csv).unwrap(), Cfg { a: 6 });
    }

    #[test]
    fn command_mismatch_rejected() {
        let art = r#"{"ponly_version": "0", "command": "sweep", "config": {"a": 4}}"#;
        assert!(load(art).is_err());
        assert!(load("y,x1\n1,0\n").is_err());
    }
}
