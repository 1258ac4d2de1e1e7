//! Training configuration files: flat `key: value` text using the same
//! syntax (and hyperparameter key names) as the model file. Values here
//! override the built-in defaults; command-line flags override both.

use std::fs;
use std::path::Path;

use hblr_core::io::{parse_kv_text, KvLine};
use hblr_core::segmentation::TrainOptions;
use hblr_core::{Error, HyperParams, Result};

fn real(line: &KvLine, path: &str) -> Result<f64> {
    line.value.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line: line.line,
        detail: format!("'{}' is not a real number", line.value),
    })
}

fn count(line: &KvLine, path: &str) -> Result<usize> {
    line.value.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line: line.line,
        detail: format!("'{}' is not a non-negative integer", line.value),
    })
}

fn seed(line: &KvLine, path: &str) -> Result<u64> {
    line.value.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line: line.line,
        detail: format!("'{}' is not a seed", line.value),
    })
}

fn flag(line: &KvLine, path: &str) -> Result<bool> {
    match line.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Parse {
            path: path.to_string(),
            line: line.line,
            detail: format!("expected true or false, found '{other}'"),
        }),
    }
}

/// Reads `path` and folds its settings into `params` and `opts`.
pub fn apply_config(
    path: &Path,
    params: &mut HyperParams,
    opts: &mut TrainOptions,
) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let lines = parse_kv_text(&path_str, &text)?;
    for line in &lines {
        if line.indent != 0 {
            return Err(Error::Schema {
                path: path_str,
                detail: format!("line {}: config keys are not nested", line.line),
            });
        }
        match line.key.as_str() {
            "a0" => params.a0 = real(line, &path_str)?,
            "b0" => params.b0 = real(line, &path_str)?,
            "beta_y" => params.beta_y = real(line, &path_str)?,
            "eps" => params.eps = real(line, &path_str)?,
            "w_gen" => params.w_gen = real(line, &path_str)?,
            "lambda_init" => params.lambda_init = real(line, &path_str)?,
            "kappa" => params.kappa = real(line, &path_str)?,
            "delta" => params.delta = real(line, &path_str)?,
            "max_iters" => params.max_iters = count(line, &path_str)?,
            "prune_threshold" => params.prune_threshold = real(line, &path_str)?,
            "lambda_stochastic" => params.lambda_stochastic = flag(line, &path_str)?,
            "segments" => opts.segments_requested = count(line, &path_str)?,
            "overlap" => opts.overlap_blocks = count(line, &path_str)?,
            "seed" => opts.noise_seed = seed(line, &path_str)?,
            other => {
                return Err(Error::Schema {
                    path: path_str,
                    detail: format!("line {}: unknown config key '{other}'", line.line),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn parse(text: &str) -> Result<(HyperParams, TrainOptions)> {
        let mut file = NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        let mut params = HyperParams::default();
        let mut opts = TrainOptions::default();
        apply_config(file.path(), &mut params, &mut opts)?;
        Ok((params, opts))
    }

    #[test]
    fn overrides_land_in_the_right_fields() {
        let (params, opts) = parse(
            "# custom run\nkappa: 0.0\nmax_iters: 50\nprune_threshold: inf\nsegments: 4\noverlap: 2\nseed: 9\nlambda_stochastic: true\n",
        )
        .unwrap();
        assert_eq!(params.kappa, 0.0);
        assert_eq!(params.max_iters, 50);
        assert_eq!(params.prune_threshold, f64::INFINITY);
        assert!(params.lambda_stochastic);
        // Untouched fields keep their defaults.
        assert_eq!(params.w_gen, HyperParams::default().w_gen);
        assert_eq!(opts.segments_requested, 4);
        assert_eq!(opts.overlap_blocks, 2);
        assert_eq!(opts.noise_seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("a0: 1e-6\nmystery: 3\n").unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn nested_keys_are_rejected() {
        assert!(parse("outer:\n  a0: 1e-6\n").is_err());
    }

    #[test]
    fn bad_values_point_at_their_line() {
        let err = parse("a0: 1e-6\nkappa: fast\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other}"),
        }
    }
}
