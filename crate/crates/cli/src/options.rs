use crate::error::{CliError, CliResult};

/// Parses a τ list such as `0.1,0.5,0.9` or `0.1:0.9:0.05` (start:stop:step,
/// stop inclusive). Items may be mixed.
pub fn parse_taus(spec: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse_f64(single, "tau")?),
            [start, stop, step] => {
                let (start, stop, step) = (
                    parse_f64(start, "tau range start")?,
                    parse_f64(stop, "tau range stop")?,
                    parse_f64(step, "tau range step")?,
                );
                if step <= 0.0 || stop < start {
                    return Err(CliError::Config(format!("bad tau range `{item}`")));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                // round to kill accumulated binary noise, e.g. 0.30000000000000004
                out.extend((0..=count).map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10));
            }
            _ => return Err(CliError::Config(format!("bad tau item `{item}`"))),
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("empty tau list".into()));
    }
    for &tau in &out {
        validate_tau(tau)?;
    }
    Ok(out)
}

pub fn parse_f64_list(spec: &str, what: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(s, what))
        .collect()
}

pub fn parse_names(spec: &str) -> Vec<String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{what}: `{s}` is not a number")))
}

pub fn validate_tau(tau: f64) -> CliResult<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "tau must lie in (0, 1), got {tau}"
        )))
    }
}

pub fn validate_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )))
    }
}

pub fn validate_folds(k: usize) -> CliResult<()> {
    if k >= 2 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "folds must be at least 2, got {k}"
        )))
    }
}

/// Worker count: explicit flag, then QUACC_THREADS, then rayon's default.
pub fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Config("--threads must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var("QUACC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "QUACC_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}
