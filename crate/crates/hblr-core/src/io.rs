//! Plain-text persistence: CSV datasets with a leading role annotation, and
//! a versioned, checksummed key/value tree for trained models.
//!
//! Both formats serialize reals with 17 significant decimal digits, enough
//! to reconstruct every `f64` bit for bit, so write -> read -> write is
//! byte-identical.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{Center, LengthScale};
use crate::posterior::WeightPosterior;
use crate::segmentation::{Dataset, Segment, SegmentedModel};
use crate::trainer::{BatchModel, HyperParams, LocalModel};

/// Prefix of the role annotation on a dataset file's first line.
pub const ROLES_PREFIX: &str = "# roles: ";
/// Identifier on a model file's first line.
pub const MODEL_FORMAT_NAME: &str = "hblr-model";
/// Newest model-file version this build reads and the one it writes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join_reals<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values
        .into_iter()
        .map(|v| format_real(*v))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Tags an I/O failure with the path it happened on, so "No such file"
/// errors name the file.
fn named_io(path: &Path, err: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        err.kind(),
        format!("{}: {err}", path.display()),
    ))
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnRole {
    Input,
    Control,
    Time,
}

fn column_role(data: &Dataset, j: usize) -> ColumnRole {
    if data.control_column == Some(j) {
        ColumnRole::Control
    } else if data.time_column == Some(j) {
        ColumnRole::Time
    } else {
        ColumnRole::Input
    }
}

/// Writes a dataset as CSV: a role line, a canonical-name header, then one
/// row per sample with inputs first and responses after.
pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    data.validate()?;
    let d = data.input_dim();
    let q = data.response_dim();

    let roles: Vec<&str> = (0..d)
        .map(|j| match column_role(data, j) {
            ColumnRole::Input => "input",
            ColumnRole::Control => "control",
            ColumnRole::Time => "time",
        })
        .collect();
    let mut text = String::new();
    text.push_str(ROLES_PREFIX);
    text.push_str(&roles.join(","));
    text.push_str(" | ");
    text.push_str(&vec!["response"; q].join(","));
    text.push('\n');

    let mut names = Vec::with_capacity(d + q);
    let mut plain = 0;
    for j in 0..d {
        names.push(match column_role(data, j) {
            ColumnRole::Control => "control".to_string(),
            ColumnRole::Time => "time".to_string(),
            ColumnRole::Input => {
                plain += 1;
                format!("input_{plain}")
            }
        });
    }
    for r in 0..q {
        names.push(format!("response_{}", r + 1));
    }
    text.push_str(&names.join(","));
    text.push('\n');

    for i in 0..data.n_samples() {
        let mut cells = Vec::with_capacity(d + q);
        for j in 0..d {
            cells.push(format_real(data.inputs[(i, j)]));
        }
        for r in 0..q {
            cells.push(format_real(data.responses[(i, r)]));
        }
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| named_io(path, e))?;
    Ok(())
}

fn schema_err(path: &str, detail: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        detail: detail.into(),
    }
}

fn parse_err(path: &str, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        detail: detail.into(),
    }
}

/// Reads a dataset written by [`write_dataset`] (or any file following the
/// same layout). The role line is authoritative for column meaning; header
/// names are accepted as-is and not preserved.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| named_io(path, e))?;
    let path_str = path.display().to_string();

    let mut lines = text.lines();
    let roles_line = lines
        .next()
        .ok_or_else(|| schema_err(&path_str, "file is empty"))?;
    let roles_body = roles_line.strip_prefix(ROLES_PREFIX).ok_or_else(|| {
        schema_err(
            &path_str,
            format!("first line must declare column roles, starting with '{ROLES_PREFIX}'"),
        )
    })?;
    let (left, right) = roles_body.split_once(" | ").ok_or_else(|| {
        schema_err(&path_str, "roles line must separate inputs from responses with ' | '")
    })?;

    let mut control_column = None;
    let mut time_column = None;
    let left_roles: Vec<&str> = left.split(',').collect();
    for (j, role) in left_roles.iter().enumerate() {
        match *role {
            "input" => {}
            "control" => {
                if control_column.replace(j).is_some() {
                    return Err(schema_err(&path_str, "more than one control column"));
                }
            }
            "time" => {
                if time_column.replace(j).is_some() {
                    return Err(schema_err(&path_str, "more than one time column"));
                }
            }
            other => {
                return Err(schema_err(
                    &path_str,
                    format!("unknown input-side role '{other}' (expected input, control, or time)"),
                ));
            }
        }
    }
    let d = left_roles.len();
    let right_roles: Vec<&str> = right.split(',').collect();
    if right_roles.iter().any(|r| *r != "response") {
        return Err(schema_err(&path_str, "response-side roles must all be 'response'"));
    }
    let q = right_roles.len();
    if d == 0 || q == 0 {
        return Err(schema_err(&path_str, "need at least one input and one response column"));
    }

    let header = lines
        .next()
        .ok_or_else(|| schema_err(&path_str, "missing header line"))?;
    if header.split(',').count() != d + q {
        return Err(schema_err(
            &path_str,
            format!("header has {} columns, roles declare {}", header.split(',').count(), d + q),
        ));
    }

    let mut input_cells: Vec<f64> = Vec::new();
    let mut response_cells: Vec<f64> = Vec::new();
    let mut n = 0;
    for (offset, row) in lines.enumerate() {
        let line_no = offset + 3;
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != d + q {
            return Err(parse_err(
                &path_str,
                line_no,
                format!("expected {} cells, found {}", d + q, cells.len()),
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                parse_err(&path_str, line_no, format!("column {}: '{cell}' is not a real number", c + 1))
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    &path_str,
                    line_no,
                    format!("column {}: value must be finite", c + 1),
                ));
            }
            if c < d {
                input_cells.push(value);
            } else {
                response_cells.push(value);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(schema_err(&path_str, "no data rows"));
    }

    let data = Dataset {
        inputs: DMatrix::from_row_slice(n, d, &input_cells),
        responses: DMatrix::from_row_slice(n, q, &response_cells),
        control_column,
        time_column,
    };
    data.validate()?;
    Ok(data)
}

// ---------------------------------------------------------------------------
// Key/value tree
// ---------------------------------------------------------------------------

/// One parsed line of a key/value tree: `key: value` at some indentation
/// depth (two spaces per level). A bare `key:` opens a section.
#[derive(Debug, Clone, PartialEq)]
pub struct KvLine {
    pub indent: usize,
    pub key: String,
    pub value: String,
    /// 1-based line number in the parsed text.
    pub line: usize,
}

/// Parses key/value-tree text. Blank lines and `#` comments are skipped;
/// indentation must use pairs of spaces.
pub fn parse_kv_text(path: &str, text: &str) -> Result<Vec<KvLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let stripped = raw.trim_start_matches(' ');
        if stripped.starts_with('\t') {
            return Err(parse_err(path, line, "tabs are not allowed in indentation"));
        }
        let spaces = raw.len() - stripped.len();
        if spaces % 2 != 0 {
            return Err(parse_err(path, line, "indentation must use two spaces per level"));
        }
        let colon = stripped
            .find(':')
            .ok_or_else(|| parse_err(path, line, "expected 'key: value'"))?;
        let key = stripped[..colon].to_string();
        if key.is_empty() {
            return Err(parse_err(path, line, "empty key"));
        }
        let after = &stripped[colon + 1..];
        let value = if after.is_empty() {
            String::new()
        } else if let Some(v) = after.strip_prefix(' ') {
            v.to_string()
        } else {
            return Err(parse_err(path, line, "expected a space between ':' and the value"));
        };
        out.push(KvLine {
            indent: spaces / 2,
            key,
            value,
            line,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

fn push_line(buf: &mut String, indent: usize, key: &str, value: &str) {
    for _ in 0..indent {
        buf.push_str("  ");
    }
    buf.push_str(key);
    buf.push(':');
    if !value.is_empty() {
        buf.push(' ');
        buf.push_str(value);
    }
    buf.push('\n');
}

fn hyperparams_body(buf: &mut String, params: &HyperParams) {
    push_line(buf, 0, "hyperparams", "");
    push_line(buf, 1, "a0", &format_real(params.a0));
    push_line(buf, 1, "b0", &format_real(params.b0));
    push_line(buf, 1, "beta_y", &format_real(params.beta_y));
    push_line(buf, 1, "eps", &format_real(params.eps));
    push_line(buf, 1, "w_gen", &format_real(params.w_gen));
    push_line(buf, 1, "lambda_init", &format_real(params.lambda_init));
    push_line(buf, 1, "kappa", &format_real(params.kappa));
    push_line(buf, 1, "delta", &format_real(params.delta));
    push_line(buf, 1, "max_iters", &params.max_iters.to_string());
    push_line(buf, 1, "prune_threshold", &format_real(params.prune_threshold));
    push_line(buf, 1, "lambda_stochastic", if params.lambda_stochastic { "true" } else { "false" });
}

fn local_model_body(buf: &mut String, index: usize, lm: &LocalModel) {
    push_line(buf, 1, &format!("local_model {index}"), "");
    push_line(buf, 2, "center", &join_reals(lm.center.coordinates().iter()));
    push_line(buf, 2, "length_scale", &join_reals(lm.length_scale.per_dim().iter()));
    push_line(buf, 2, "alpha_hat", &join_reals(lm.alpha_hat.iter()));
    push_line(buf, 2, "beta_f_hat", &format_real(lm.beta_f_hat));
    push_line(buf, 2, "weight_mean", &join_reals(lm.weights.mean.iter()));
    let p = lm.weights.mean.len();
    let mut upper = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in i..p {
            upper.push(lm.weights.covariance[(i, j)]);
        }
    }
    push_line(buf, 2, "weight_cov_upper", &join_reals(upper.iter()));
    let mask: Vec<&str> = lm.active_mask.iter().map(|&a| if a { "1" } else { "0" }).collect();
    push_line(buf, 2, "active_mask", &mask.join(" "));
}

fn model_body(model: &SegmentedModel, params: &HyperParams) -> String {
    let mut buf = String::new();
    hyperparams_body(&mut buf, params);
    push_line(&mut buf, 0, "segments", &model.segments.len().to_string());
    for (i, seg) in model.segments.iter().enumerate() {
        push_line(&mut buf, 0, &format!("segment {i}"), "");
        push_line(&mut buf, 1, "rows", &format!("{} {}", seg.start, seg.end));
        let flat: Vec<f64> = seg.input_bounds.iter().flat_map(|(lo, hi)| [*lo, *hi]).collect();
        push_line(&mut buf, 1, "bounds", &join_reals(flat.iter()));
    }
    push_line(&mut buf, 0, "responses", &model.batch_models.len().to_string());
    for (r, row) in model.batch_models.iter().enumerate() {
        for (s, bm) in row.iter().enumerate() {
            push_line(&mut buf, 0, &format!("batch_model {r} {s}"), "");
            push_line(&mut buf, 1, "input_dim", &bm.input_dim.to_string());
            push_line(&mut buf, 1, "input_scale", &format_real(bm.input_scale));
            push_line(&mut buf, 1, "local_models", &bm.local_models.len().to_string());
            for (i, lm) in bm.local_models.iter().enumerate() {
                local_model_body(&mut buf, i, lm);
            }
        }
    }
    buf
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Saves a trained model (with the hyperparameters it was trained under) as
/// a versioned, checksummed key/value tree.
pub fn save_model(
    path: impl AsRef<Path>,
    model: &SegmentedModel,
    params: &HyperParams,
) -> Result<()> {
    model.validate()?;
    params.validate()?;
    let body = model_body(model, params);
    let text = format!(
        "format: {MODEL_FORMAT_NAME}\nversion: {MODEL_FORMAT_VERSION}\nchecksum: {}\n{body}",
        sha256_hex(body.as_bytes())
    );
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| named_io(path, e))?;
    Ok(())
}

struct Cursor<'a> {
    lines: &'a [KvLine],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, indent: usize, key: &str) -> Result<&'a KvLine> {
        let Some(l) = self.lines.get(self.pos) else {
            return Err(Error::ModelFormat(format!(
                "truncated model file: expected '{key}', found end of file"
            )));
        };
        if l.indent != indent || l.key != key {
            return Err(Error::ModelFormat(format!(
                "line {}: expected '{key}' at depth {indent}, found '{}' at depth {}",
                l.line, l.key, l.indent
            )));
        }
        self.pos += 1;
        Ok(l)
    }

    fn value(&mut self, indent: usize, key: &str) -> Result<&'a KvLine> {
        let l = self.take(indent, key)?;
        if l.value.is_empty() {
            return Err(Error::ModelFormat(format!("line {}: '{key}' needs a value", l.line)));
        }
        Ok(l)
    }

    fn section(&mut self, indent: usize, key: &str) -> Result<()> {
        let l = self.take(indent, key)?;
        if !l.value.is_empty() {
            return Err(Error::ModelFormat(format!(
                "line {}: '{key}' opens a section and takes no value",
                l.line
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if let Some(l) = self.lines.get(self.pos) {
            return Err(Error::ModelFormat(format!(
                "line {}: unexpected content after the model definition",
                l.line
            )));
        }
        Ok(())
    }
}

fn real_from(l: &KvLine) -> Result<f64> {
    let v: f64 = l.value.parse().map_err(|_| {
        Error::ModelFormat(format!("line {}: '{}' is not a real number", l.line, l.value))
    })?;
    Ok(v)
}

fn finite_real_from(l: &KvLine) -> Result<f64> {
    let v = real_from(l)?;
    if !v.is_finite() {
        return Err(Error::ModelFormat(format!("line {}: value must be finite", l.line)));
    }
    Ok(v)
}

fn count_from(l: &KvLine) -> Result<usize> {
    l.value.parse().map_err(|_| {
        Error::ModelFormat(format!("line {}: '{}' is not a count", l.line, l.value))
    })
}

fn reals_from(l: &KvLine, expected: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = l.value.split(' ').collect();
    if parts.len() != expected {
        return Err(Error::ModelFormat(format!(
            "line {}: expected {expected} values, found {}",
            l.line,
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            let v: f64 = p.parse().map_err(|_| {
                Error::ModelFormat(format!("line {}: '{p}' is not a real number", l.line))
            })?;
            if !v.is_finite() {
                return Err(Error::ModelFormat(format!(
                    "line {}: values must be finite",
                    l.line
                )));
            }
            Ok(v)
        })
        .collect()
}

fn mask_from(l: &KvLine, expected: usize) -> Result<Vec<bool>> {
    let parts: Vec<&str> = l.value.split(' ').collect();
    if parts.len() != expected {
        return Err(Error::ModelFormat(format!(
            "line {}: expected {expected} mask entries, found {}",
            l.line,
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| match *p {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::ModelFormat(format!(
                "line {}: mask entries must be 0 or 1, found '{other}'",
                l.line
            ))),
        })
        .collect()
}

fn load_hyperparams(cur: &mut Cursor) -> Result<HyperParams> {
    cur.section(0, "hyperparams")?;
    let a0 = finite_real_from(cur.value(1, "a0")?)?;
    let b0 = finite_real_from(cur.value(1, "b0")?)?;
    let beta_y = finite_real_from(cur.value(1, "beta_y")?)?;
    let eps = finite_real_from(cur.value(1, "eps")?)?;
    let w_gen = finite_real_from(cur.value(1, "w_gen")?)?;
    let lambda_init = finite_real_from(cur.value(1, "lambda_init")?)?;
    let kappa = finite_real_from(cur.value(1, "kappa")?)?;
    let delta = finite_real_from(cur.value(1, "delta")?)?;
    let max_iters = count_from(cur.value(1, "max_iters")?)?;
    let prune_threshold = real_from(cur.value(1, "prune_threshold")?)?;
    let l = cur.value(1, "lambda_stochastic")?;
    let lambda_stochastic = match l.value.as_str() {
        "true" => true,
        "false" => false,
        other => {
            return Err(Error::ModelFormat(format!(
                "line {}: expected true or false, found '{other}'",
                l.line
            )));
        }
    };
    let params = HyperParams {
        a0,
        b0,
        beta_y,
        eps,
        w_gen,
        lambda_init,
        kappa,
        delta,
        max_iters,
        prune_threshold,
        lambda_stochastic,
    };
    params
        .validate()
        .map_err(|e| Error::ModelFormat(format!("invalid hyperparameters: {e}")))?;
    Ok(params)
}

fn load_local_model(cur: &mut Cursor, index: usize, input_dim: usize) -> Result<LocalModel> {
    cur.section(1, &format!("local_model {index}"))?;
    let p = input_dim + 1;
    let center = reals_from(cur.value(2, "center")?, input_dim)?;
    let scale_line = cur.value(2, "length_scale")?;
    let scale = reals_from(scale_line, input_dim)?;
    let alpha_line = cur.value(2, "alpha_hat")?;
    let alpha = reals_from(alpha_line, p)?;
    if alpha.iter().any(|a| *a <= 0.0) {
        return Err(Error::ModelFormat(format!(
            "line {}: feature precisions must be positive",
            alpha_line.line
        )));
    }
    let beta_line = cur.value(2, "beta_f_hat")?;
    let beta_f_hat = finite_real_from(beta_line)?;
    if beta_f_hat <= 0.0 {
        return Err(Error::ModelFormat(format!(
            "line {}: the target precision must be positive",
            beta_line.line
        )));
    }
    let mean = reals_from(cur.value(2, "weight_mean")?, p)?;
    let cov_line = cur.value(2, "weight_cov_upper")?;
    let upper = reals_from(cov_line, p * (p + 1) / 2)?;
    let mask_line = cur.value(2, "active_mask")?;
    let mask = mask_from(mask_line, p)?;

    let mut covariance = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            covariance[(i, j)] = upper[k];
            covariance[(j, i)] = upper[k];
            k += 1;
        }
    }
    let mean = DVector::from_vec(mean);
    for (pidx, &active) in mask.iter().enumerate() {
        if !active {
            let row_zero = (0..p).all(|j| covariance[(pidx, j)] == 0.0);
            if mean[pidx] != 0.0 || !row_zero {
                return Err(Error::ModelFormat(format!(
                    "line {}: pruned weights must be exactly zero",
                    mask_line.line
                )));
            }
        }
    }

    let center = Center::new(DVector::from_vec(center))
        .map_err(|e| Error::ModelFormat(format!("line {}: {e}", scale_line.line)))?;
    let length_scale = LengthScale::new(DVector::from_vec(scale))
        .map_err(|e| Error::ModelFormat(format!("line {}: {e}", scale_line.line)))?;
    Ok(LocalModel {
        center,
        length_scale,
        alpha_hat: DVector::from_vec(alpha),
        beta_f_hat,
        weights: WeightPosterior { mean, covariance },
        active_mask: mask,
    })
}

fn load_batch_model(cur: &mut Cursor, r: usize, s: usize) -> Result<BatchModel> {
    cur.section(0, &format!("batch_model {r} {s}"))?;
    let input_dim = count_from(cur.value(1, "input_dim")?)?;
    let scale_line = cur.value(1, "input_scale")?;
    let input_scale = finite_real_from(scale_line)?;
    if input_scale <= 0.0 {
        return Err(Error::ModelFormat(format!(
            "line {}: the input scale must be positive",
            scale_line.line
        )));
    }
    let n_models = count_from(cur.value(1, "local_models")?)?;
    let mut local_models = Vec::with_capacity(n_models);
    for i in 0..n_models {
        local_models.push(load_local_model(cur, i, input_dim)?);
    }
    Ok(BatchModel {
        input_dim,
        input_scale,
        local_models,
    })
}

/// Loads a model saved by [`save_model`], verifying version and checksum
/// and re-validating every structural invariant.
pub fn load_model(path: impl AsRef<Path>) -> Result<(SegmentedModel, HyperParams)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| named_io(path, e))?;
    let path_str = path.display().to_string();

    let mut rest = text.as_str();
    let mut take_line = |what: &str| -> Result<&str> {
        let (line, tail) = rest
            .split_once('\n')
            .ok_or_else(|| Error::ModelFormat(format!("truncated model file: missing {what}")))?;
        rest = tail;
        Ok(line)
    };

    let format_line = take_line("the format line")?;
    let expected_format = format!("format: {MODEL_FORMAT_NAME}");
    if format_line != expected_format {
        return Err(Error::ModelFormat(format!(
            "{path_str} is not a model file (expected '{expected_format}')"
        )));
    }
    let version_line = take_line("the version line")?;
    let version: u32 = version_line
        .strip_prefix("version: ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::ModelFormat("malformed version line".to_string()))?;
    if version > MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "model file version {version} is newer than the supported version {MODEL_FORMAT_VERSION}"
        )));
    }
    if version == 0 {
        return Err(Error::ModelFormat("model file version 0 is not valid".to_string()));
    }
    let checksum_line = take_line("the checksum line")?;
    let declared = checksum_line
        .strip_prefix("checksum: ")
        .ok_or_else(|| Error::ModelFormat("malformed checksum line".to_string()))?;
    let body = rest;
    let actual = sha256_hex(body.as_bytes());
    if declared != actual {
        return Err(Error::ModelFormat(
            "checksum mismatch: the file is corrupted or was edited".to_string(),
        ));
    }

    let lines = parse_kv_text(&path_str, body)?;
    let mut cur = Cursor { lines: &lines, pos: 0 };

    let params = load_hyperparams(&mut cur)?;

    let n_segments = count_from(cur.value(0, "segments")?)?;
    let mut segments = Vec::with_capacity(n_segments);
    for i in 0..n_segments {
        cur.section(0, &format!("segment {i}"))?;
        let rows_line = cur.value(1, "rows")?;
        let parts: Vec<&str> = rows_line.value.split(' ').collect();
        let (start, end) = match parts.as_slice() {
            [a, b] => (
                a.parse::<usize>().ok(),
                b.parse::<usize>().ok(),
            ),
            _ => (None, None),
        };
        let (Some(start), Some(end)) = (start, end) else {
            return Err(Error::ModelFormat(format!(
                "line {}: rows must be two counts",
                rows_line.line
            )));
        };
        if end <= start {
            return Err(Error::ModelFormat(format!(
                "line {}: a segment's row range must be non-empty",
                rows_line.line
            )));
        }
        let bounds_line = cur.value(1, "bounds")?;
        let flat_len = bounds_line.value.split(' ').count();
        if flat_len % 2 != 0 {
            return Err(Error::ModelFormat(format!(
                "line {}: bounds must come in lo/hi pairs",
                bounds_line.line
            )));
        }
        let flat = reals_from(bounds_line, flat_len)?;
        let input_bounds: Vec<(f64, f64)> =
            flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        if input_bounds.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::ModelFormat(format!(
                "line {}: each bound needs lo <= hi",
                bounds_line.line
            )));
        }
        segments.push(Segment {
            start,
            end,
            input_bounds,
        });
    }

    let n_responses = count_from(cur.value(0, "responses")?)?;
    let mut batch_models = Vec::with_capacity(n_responses);
    for r in 0..n_responses {
        let mut row = Vec::with_capacity(n_segments);
        for s in 0..n_segments {
            row.push(load_batch_model(&mut cur, r, s)?);
        }
        batch_models.push(row);
    }
    cur.finish()?;

    let model = SegmentedModel {
        segments,
        batch_models,
    };
    model
        .validate()
        .map_err(|e| Error::ModelFormat(format!("inconsistent model contents: {e}")))?;
    Ok((model, params))
}
