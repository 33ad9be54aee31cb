//! Model checkpoints: a plain-text header (layer sizes, seed) followed by the
//! flat parameter vector as little-endian 64-bit floats.
//!
//! ```text
//! mlp 784 32 2
//! seed 42
//! <weights then biases per layer, row-major, f64 LE>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beckman::MlpModel;

pub fn save(path: &Path, model: &MlpModel) -> Result<()> {
    let mut out = Vec::new();
    write!(out, "mlp")?;
    for s in model.sizes() {
        write!(out, " {s}")?;
    }
    writeln!(out)?;
    writeln!(out, "seed {}", model.seed)?;
    for v in model.parameters() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).with_context(|| format!("writing checkpoint {}", path.display()))
}

pub fn load(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let header_end = find_second_newline(&bytes)
        .with_context(|| format!("{}: missing checkpoint header", path.display()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .with_context(|| format!("{}: header is not UTF-8", path.display()))?;
    let mut lines = header.lines();

    let sizes_line = lines.next().unwrap_or_default();
    let mut parts = sizes_line.split_whitespace();
    if parts.next() != Some("mlp") {
        bail!("{}: checkpoint header must start with 'mlp'", path.display());
    }
    let sizes: Vec<usize> = parts
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("{}: bad layer sizes", path.display()))?;
    if sizes.len() < 2 {
        bail!("{}: need at least two layer sizes", path.display());
    }

    let seed_line = lines.next().unwrap_or_default();
    let seed: u64 = match seed_line.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["seed", value] => value.parse().with_context(|| format!("{}: bad seed", path.display()))?,
        _ => bail!("{}: expected 'seed <n>' line", path.display()),
    };

    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let raw = &bytes[header_end..];
    if raw.len() != expected * 8 {
        bail!(
            "{}: parameter payload holds {} bytes, want {}",
            path.display(),
            raw.len(),
            expected * 8
        );
    }
    let flat: Vec<f64> =
        raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();

    let mut model = MlpModel::new_random(&sizes, seed)?;
    model.set_parameters(&flat)?;
    Ok(model)
}

fn find_second_newline(bytes: &[u8]) -> Option<usize> {
    let first = bytes.iter().position(|&b| b == b'\n')?;
    let second = bytes[first + 1..].iter().position(|&b| b == b'\n')?;
    Some(first + 1 + second + 1)
}
