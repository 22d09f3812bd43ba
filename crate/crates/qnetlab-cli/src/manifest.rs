//! Run manifests and the seed plumbing behind them. The manifest is the
//! reproducibility contract: the numeric body of an artifact is a pure
//! function of (command, arguments, seed, tool_version).

use serde_json::{json, Value};

use crate::CliError;

/// Provenance block embedded at the top of every artifact.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<(String, String)>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_ms: u128,
}

impl RunManifest {
    /// Arguments are sorted by key so the rendering never depends on flag
    /// order on the command line.
    pub fn new(command: &str, mut arguments: Vec<(String, String)>, seed: u64) -> Self {
        arguments.sort();
        RunManifest {
            command: command.to_string(),
            arguments,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: 0,
        }
    }

    /// `#`-prefixed header block; everything below it is the numeric body.
    pub fn csv_block(&self) -> String {
        let args = self
            .arguments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "# command: {}\n# arguments: {}\n# seed: {}\n# tool_version: {}\n# wall_time_ms: {}\n",
            self.command, args, self.seed, self.tool_version, self.wall_time_ms
        )
    }

    pub fn json_value(&self) -> Value {
        let args: serde_json::Map<String, Value> = self
            .arguments
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        json!({
            "command": self.command,
            "arguments": args,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "wall_time_ms": self.wall_time_ms as u64,
        })
    }
}

/// Master seed precedence: --seed flag, then QNETLAB_SEED, then 0.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("QNETLAB_SEED") {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            CliError::Parse(format!(
                "QNETLAB_SEED must be an unsigned 64-bit integer, got '{raw}'"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based splittable sub-seeds: child k of master m is
/// splitmix64(splitmix64(m) XOR (k + 1)). Any worker can derive its seed
/// from its counter alone, so parallel and serial schedules agree exactly.
pub fn child_seed(master: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(master) ^ counter.wrapping_add(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arguments_are_sorted_by_key() {
        let m = RunManifest::new(
            "demo",
            vec![("z".into(), "1".into()), ("a".into(), "2".into())],
            7,
        );
        assert_eq!(m.arguments[0].0, "a");
        assert!(m.csv_block().starts_with("# command: demo\n# arguments: a=2 z=1\n"));
    }

    #[test]
    fn child_seeds_differ_and_reproduce() {
        let a = child_seed(0, 0);
        let b = child_seed(0, 1);
        let c = child_seed(1, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, child_seed(0, 0));
    }
}
