//! Checkpoint file format.
//!
//! A line-oriented text header (magic `SELORA1`, version, adapter count, the
//! canonical config text, payload checksum and length) followed by a binary
//! payload: index sets as 32-bit unsigned pairs, values as 64-bit IEEE-754
//! little-endian, optimizer moments, per adapter. Base weights are not
//! stored; they are rebuilt deterministically from the embedded config.
//! `load(save(x))` is bit-exact and any flipped payload byte is detected by
//! the CRC-32 checksum.

use std::fs;
use std::path::Path;

use selora_core::adapter::InitStats;
use selora_core::adapter::{
    Adapter, AdapterConfig, IndexSet, InitScheme, Schema, SparseSpectralMatrix,
};
use selora_core::spectral::{SpectralBasis, WaveletKind};
use selora_core::trainer::OptimizerState;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &str = "SELORA1";
pub const VERSION: u32 = 1;

fn crc32(data: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 {
                0xedb8_8320 ^ (c >> 1)
            } else {
                c >> 1
            };
        }
        *entry = c;
    }
    let mut crc = 0xffff_ffffu32;
    for &byte in data {
        crc = table[((crc ^ byte as u32) & 0xff) as usize] ^ (crc >> 8);
    }
    crc ^ 0xffff_ffff
}

fn schema_tag(schema: Schema) -> u8 {
    match schema {
        Schema::Lora => 0,
        Schema::Dora => 1,
        Schema::Hira => 2,
        Schema::MaskedLora => 3,
        Schema::MaskedDora => 4,
        Schema::MaskedHira => 5,
    }
}

fn schema_from_tag(tag: u8) -> CliResult<Schema> {
    Ok(match tag {
        0 => Schema::Lora,
        1 => Schema::Dora,
        2 => Schema::Hira,
        3 => Schema::MaskedLora,
        4 => Schema::MaskedDora,
        5 => Schema::MaskedHira,
        _ => return Err(CliError::Corruption(format!("unknown schema tag {tag}"))),
    })
}

fn basis_tag(basis: &SpectralBasis) -> u8 {
    match basis {
        SpectralBasis::Fourier => 0,
        SpectralBasis::Wavelet(f) => match f.kind {
            WaveletKind::Haar => 1,
            WaveletKind::Daubechies4 => 2,
            WaveletKind::Biorthogonal22 => 3,
            WaveletKind::Coiflet1 => 4,
        },
    }
}

fn basis_from_tag(tag: u8) -> CliResult<SpectralBasis> {
    Ok(match tag {
        0 => SpectralBasis::Fourier,
        1 => SpectralBasis::wavelet(WaveletKind::Haar),
        2 => SpectralBasis::wavelet(WaveletKind::Daubechies4),
        3 => SpectralBasis::wavelet(WaveletKind::Biorthogonal22),
        4 => SpectralBasis::wavelet(WaveletKind::Coiflet1),
        _ => return Err(CliError::Corruption(format!("unknown basis tag {tag}"))),
    })
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { bytes: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64_slice(&mut self, values: &[f64]) {
        for &v in values {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Corruption("payload truncated".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> CliResult<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn write_index_set(w: &mut Writer, set: &IndexSet) {
    w.u64(set.seed());
    w.u32(set.rows() as u32);
    w.u32(set.cols() as u32);
    w.u32(set.len() as u32);
    for &(u, v) in set.indices() {
        w.u32(u);
        w.u32(v);
    }
}

fn read_index_set(r: &mut Reader<'_>) -> CliResult<IndexSet> {
    let seed = r.u64()?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut indices = Vec::with_capacity(count);
    for _ in 0..count {
        let u = r.u32()?;
        let v = r.u32()?;
        indices.push((u, v));
    }
    IndexSet::from_parts(rows, cols, indices, seed)
        .map_err(|e| CliError::Corruption(format!("invalid stored index set: {e}")))
}

fn encode_payload(adapters: &[Adapter], states: &[OptimizerState]) -> Vec<u8> {
    let mut w = Writer::new();
    for (adapter, state) in adapters.iter().zip(states) {
        let cfg = adapter.config();
        w.u32(cfg.rank as u32);
        w.u32(cfg.in_dim as u32);
        w.u32(cfg.out_dim as u32);
        w.f64(cfg.alpha);
        w.f64(cfg.sparse_ratio);
        w.f64(cfg.dropout_rate);
        w.u8(schema_tag(cfg.schema));
        w.u8(basis_tag(&cfg.basis));
        w.u8(match cfg.init_scheme {
            InitScheme::Kaiming => 0,
            InitScheme::Xavier => 1,
        });
        w.u8(adapter.magnitude().is_some() as u8);
        w.u64(cfg.seed);
        write_index_set(&mut w, adapter.factor_a().index_set());
        write_index_set(&mut w, adapter.factor_b().index_set());
        w.f64_slice(adapter.factor_a().values());
        w.f64_slice(adapter.factor_b().values());
        if let Some(m) = adapter.magnitude() {
            w.f64_slice(m);
        }
        let stats = adapter.init_stats();
        w.f64(stats.variance_ratio);
        w.f64(stats.aux_variance);
        w.u64(state.step_count());
        w.u32(state.first_moment().len() as u32);
        w.f64_slice(state.first_moment());
        w.f64_slice(state.second_moment());
    }
    w.bytes
}

/// Saves adapters and optimizer states with the canonical config embedded.
pub fn save_checkpoint(
    path: &Path,
    config: &RunConfig,
    adapters: &[Adapter],
    states: &[OptimizerState],
) -> CliResult<()> {
    assert_eq!(adapters.len(), states.len());
    let payload = encode_payload(adapters, states);
    let config_text = config.emit();
    let config_lines: Vec<&str> = config_text.lines().collect();

    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("version {VERSION}\n"));
    header.push_str(&format!("adapters {}\n", adapters.len()));
    header.push_str(&format!("config_lines {}\n", config_lines.len()));
    for line in &config_lines {
        header.push_str(line);
        header.push('\n');
    }
    header.push_str(&format!("checksum {:08x}\n", crc32(&payload)));
    header.push_str(&format!("payload {}\n", payload.len()));

    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

fn header_line<'a>(lines: &mut std::str::Lines<'a>, what: &str) -> CliResult<&'a str> {
    lines
        .next()
        .ok_or_else(|| CliError::Format(format!("checkpoint header ended before {what}")))
}

fn header_field<'a>(line: &'a str, key: &str) -> CliResult<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| CliError::Format(format!("expected `{key} ...`, got {line:?}")))
}

/// Loads a checkpoint: the embedded config, and per adapted base weight the
/// adapter and its optimizer state.
pub fn load_checkpoint(path: &Path) -> CliResult<(RunConfig, Vec<(Adapter, OptimizerState)>)> {
    let bytes =
        fs::read(path).map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;

    // header is pure text; find its end by parsing line by line
    let text = String::from_utf8_lossy(&bytes);
    let mut lines = text.lines();
    let magic = header_line(&mut lines, "magic")?;
    if magic != MAGIC {
        return Err(CliError::Format(format!(
            "bad magic {magic:?}; not a checkpoint file"
        )));
    }
    let version_line = header_line(&mut lines, "version")?;
    let version: u32 = header_field(version_line, "version")?
        .parse()
        .map_err(|_| CliError::Format("unparsable version".into()))?;
    if version != VERSION {
        return Err(CliError::Version(format!(
            "checkpoint version {version} not supported (this build reads {VERSION})"
        )));
    }
    let adapters_line = header_line(&mut lines, "adapters")?;
    let adapter_count: usize = header_field(adapters_line, "adapters")?
        .parse()
        .map_err(|_| CliError::Format("unparsable adapter count".into()))?;
    let config_count_line = header_line(&mut lines, "config_lines")?;
    let config_lines: usize = header_field(config_count_line, "config_lines")?
        .parse()
        .map_err(|_| CliError::Format("unparsable config_lines".into()))?;
    let mut config_text = String::new();
    for _ in 0..config_lines {
        config_text.push_str(header_line(&mut lines, "config")?);
        config_text.push('\n');
    }
    let checksum_line = header_line(&mut lines, "checksum")?;
    let stored_checksum = u32::from_str_radix(header_field(checksum_line, "checksum")?, 16)
        .map_err(|_| CliError::Format("unparsable checksum".into()))?;
    let payload_line = header_line(&mut lines, "payload")?;
    let payload_len: usize = header_field(payload_line, "payload")?
        .parse()
        .map_err(|_| CliError::Format("unparsable payload length".into()))?;

    // payload starts right after the header text; the header is pure ASCII,
    // so summing line lengths gives the byte offset
    let header_len = [magic, version_line, adapters_line, config_count_line]
        .iter()
        .map(|l| l.len() + 1)
        .sum::<usize>()
        + config_text.len()
        + checksum_line.len()
        + 1
        + payload_line.len()
        + 1;
    if bytes.len() != header_len + payload_len {
        return Err(CliError::Corruption(format!(
            "payload length mismatch: header says {payload_len}, file has {}",
            bytes.len().saturating_sub(header_len)
        )));
    }
    let payload = &bytes[header_len..];
    if crc32(payload) != stored_checksum {
        return Err(CliError::Corruption(
            "payload checksum mismatch; the file is damaged".into(),
        ));
    }

    let config = RunConfig::parse(&config_text)?;
    let task = config.build_task()?;
    let base_weights = task.base_weights();
    if base_weights.len() != adapter_count {
        return Err(CliError::Corruption(format!(
            "config task exposes {} weights but checkpoint stores {adapter_count}",
            base_weights.len()
        )));
    }

    let mut out = Vec::with_capacity(adapter_count);
    let mut r = Reader::new(payload);
    for w0 in base_weights {
        let rank = r.u32()? as usize;
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let alpha = r.f64()?;
        let sparse_ratio = r.f64()?;
        let dropout_rate = r.f64()?;
        let schema = schema_from_tag(r.u8()?)?;
        let basis = basis_from_tag(r.u8()?)?;
        let init_scheme = match r.u8()? {
            0 => InitScheme::Kaiming,
            1 => InitScheme::Xavier,
            t => return Err(CliError::Corruption(format!("unknown init tag {t}"))),
        };
        let has_magnitude = r.u8()? != 0;
        let location_seed = r.u64()?;
        let omega_a = read_index_set(&mut r)?;
        let omega_b = read_index_set(&mut r)?;
        let fa_values = r.f64_vec(omega_a.len())?;
        let fb_values = r.f64_vec(omega_b.len())?;
        let magnitude = if has_magnitude {
            Some(r.f64_vec(in_dim)?)
        } else {
            None
        };
        let variance_ratio = r.f64()?;
        let aux_variance = r.f64()?;
        let t = r.u64()?;
        let moments = r.u32()? as usize;
        let first = r.f64_vec(moments)?;
        let second = r.f64_vec(moments)?;

        let adapter_cfg = AdapterConfig {
            rank,
            in_dim,
            out_dim,
            alpha,
            sparse_ratio,
            basis,
            schema,
            init_scheme,
            dropout_rate,
            seed: location_seed,
        };
        let factor_a = SparseSpectralMatrix::from_parts(omega_a, fa_values)
            .map_err(|e| CliError::Corruption(format!("factor A: {e}")))?;
        let factor_b = SparseSpectralMatrix::from_parts(omega_b, fb_values)
            .map_err(|e| CliError::Corruption(format!("factor B: {e}")))?;
        let adapter = Adapter::from_parts(
            adapter_cfg,
            w0.clone(),
            factor_a,
            factor_b,
            magnitude,
            InitStats {
                variance_ratio,
                aux_variance,
            },
        )
        .map_err(|e| CliError::Corruption(format!("stored adapter inconsistent: {e}")))?;
        let state = OptimizerState::from_parts(config.optim.clone(), t, first, second)
            .map_err(|e| CliError::Corruption(format!("optimizer state: {e}")))?;
        out.push((adapter, state));
    }
    if !r.finished() {
        return Err(CliError::Corruption(
            "trailing bytes after the last adapter".into(),
        ));
    }
    Ok((config, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_known_vector() {
        // standard IEEE check value
        assert_eq!(crc32(b"123456789"), 0xcbf4_3926);
    }
}
