//! Policy checkpoints: one JSON header line, then the parameters as little-endian f64.

use super::{AgentError, Algorithm, PolicyKind, PolicyParams};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub shape: Vec<usize>,
    pub algorithm: String,
    pub steps: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, policy: &PolicyParams, algorithm: Algorithm, steps: usize) -> Result<(), AgentError> {
    let (kind, shape) = match policy.kind {
        PolicyKind::Tabular => ("tabular", vec![policy.inputs, policy.actions]),
        PolicyKind::Mlp => ("mlp", vec![policy.inputs, policy.hidden, policy.actions]),
    };
    let header = CheckpointHeader {
        kind: kind.into(),
        shape,
        algorithm: algorithm.to_string(),
        steps,
    };
    let json = serde_json::to_string(&header).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let io = |e: std::io::Error| AgentError::Checkpoint(e.to_string());
    w.write_all(json.as_bytes()).map_err(io)?;
    w.write_all(b"\n").map_err(io)?;
    for t in &policy.theta {
        w.write_all(&t.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(CheckpointHeader, PolicyParams), AgentError> {
    let bad = |m: String| AgentError::Checkpoint(m);
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end()).map_err(|e| bad(e.to_string()))?;
    let (kind, inputs, hidden, actions) = match (header.kind.as_str(), header.shape.as_slice()) {
        ("tabular", &[s, a]) => (PolicyKind::Tabular, s, 0, a),
        ("mlp", &[d, h, a]) => (PolicyKind::Mlp, d, h, a),
        _ => return Err(bad(format!("unsupported policy {} {:?}", header.kind, header.shape))),
    };
    let len = match kind {
        PolicyKind::Tabular => inputs * actions,
        PolicyKind::Mlp => hidden * inputs + hidden + actions * hidden + actions,
    };
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| bad(e.to_string()))?;
    if bytes.len() != 8 * len {
        return Err(bad(format!("expected {} parameter bytes, found {}", 8 * len, bytes.len())));
    }
    let theta = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((
        header,
        PolicyParams {
            kind,
            inputs,
            actions,
            hidden,
            theta,
        },
    ))
}

pub fn save_checkpoint(path: &Path, policy: &PolicyParams, algorithm: Algorithm, steps: usize) -> Result<(), AgentError> {
    let f = std::fs::File::create(path).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
    write_checkpoint(std::io::BufWriter::new(f), policy, algorithm, steps)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, PolicyParams), AgentError> {
    let f = std::fs::File::open(path).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
    read_checkpoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParams::mlp(3, 4, 5, &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Algorithm::Plpg, 42).unwrap();
        let (h, q) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(h.steps, 42);
        assert_eq!(h.algorithm, "plpg");
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_file() {
        let p = PolicyParams::tabular(2, 2);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, Algorithm::Pg, 0).unwrap();
        buf.pop();
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
