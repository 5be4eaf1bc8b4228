//! JSON config files with flat `<command>.<flag>` keys. Values are turned
//! into flags for the named command unless the flag is already present.

use std::path::PathBuf;

use serde_json::Value;

pub const CONFIG_ENV: &str = "CARENOTE_CONFIG";

/// `--config` from argv, else the environment variable.
pub fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    std::env::var_os(CONFIG_ENV).map(PathBuf::from)
}

fn has_flag(args: &[String], flag: &str) -> bool {
    let long = format!("--{flag}");
    let eq = format!("--{flag}=");
    args.iter().any(|a| *a == long || a.starts_with(&eq))
}

/// Appends flags from `config` for the subcommand found in `args`.
pub fn inject(args: Vec<String>, config: &Value, commands: &[&str]) -> Result<Vec<String>, String> {
    let Some(obj) = config.as_object() else {
        return Err("config file must hold a JSON object".into());
    };
    let Some(cmd) = args.iter().skip(1).find(|a| commands.contains(&a.as_str())).cloned() else {
        return Ok(args);
    };
    let mut out = args;
    let prefix = format!("{cmd}.");
    for (key, value) in obj {
        let Some(flag) = key.strip_prefix(&prefix) else { continue };
        if has_flag(&out, flag) {
            continue;
        }
        match value {
            Value::Bool(true) => out.push(format!("--{flag}")),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => out.extend([format!("--{flag}"), s.clone()]),
            Value::Number(n) => out.extend([format!("--{flag}"), n.to_string()]),
            _ => return Err(format!("config key {key} must be a string, number or boolean")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_win_over_config() {
        let cfg: Value = serde_json::json!({"gen.docs": 50, "gen.seed": 3, "split.seed": 9, "gen.verbose": true});
        let out = inject(argv("carenote gen --docs 10"), &cfg, &["gen", "split"]).unwrap();
        assert_eq!(out, argv("carenote gen --docs 10 --seed 3 --verbose"));
        assert!(inject(argv("carenote gen"), &serde_json::json!([1]), &["gen"]).is_err());
    }

    #[test]
    fn finds_config_flag() {
        assert_eq!(config_path(&argv("carenote --config a.json gen")), Some(PathBuf::from("a.json")));
        assert_eq!(config_path(&argv("carenote gen --config=b.json")), Some(PathBuf::from("b.json")));
    }
}
