use std::path::PathBuf;
use std::str::FromStr;

use shrinker_core::error::{Error, Result};
use shrinker_core::gronwall::DEFAULT_SLACK;
use shrinker_core::shooting::{ShootingConfig, A_CENTER, DEFAULT_BRACKET_HALF_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

pub fn parse_formats(s: &str) -> Result<Vec<Format>> {
    let mut v = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

pub fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bracket '{s}' is not of the form LO:HI")))?;
    Ok((parse_f64("bracket", lo)?, parse_f64("bracket", hi)?))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
}

/// Everything a run depends on. Read from a flat `key = value` file, then
/// overridden by flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shooting: ShootingConfig,
    pub bracket: (f64, f64),
    pub slack: f64,
    pub out_dir: PathBuf,
    pub emit: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            shooting: ShootingConfig::default(),
            bracket: (A_CENTER - DEFAULT_BRACKET_HALF_WIDTH, A_CENTER + DEFAULT_BRACKET_HALF_WIDTH),
            slack: DEFAULT_SLACK,
            out_dir: PathBuf::from("out"),
            emit: vec![Format::Json],
        }
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are
    /// errors so that typos cannot silently change a certificate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.shooting;
        match key {
            "rtol" => s.rtol = parse_f64(key, v)?,
            "atol" => s.atol = parse_f64(key, v)?,
            "max_step" => s.max_step = parse_f64(key, v)?,
            "max_param" => s.max_param = parse_f64(key, v)?,
            "bisection_tol" => s.bisection_tol = parse_f64(key, v)?,
            "invert_tol" => s.invert_tol = parse_f64(key, v)?,
            "tol" => self.set_tol(parse_f64(key, v)?),
            "bracket" => self.bracket = parse_bracket(v)?,
            "slack" => self.slack = parse_f64(key, v)?,
            "out" => self.out_dir = PathBuf::from(v),
            "emit" => self.emit = parse_formats(v)?,
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// `--tol`: relative tolerance, with the absolute one two orders below.
    pub fn set_tol(&mut self, tol: f64) {
        self.shooting.rtol = tol;
        self.shooting.atol = tol * 1e-2;
    }

    pub fn validate(&self) -> Result<()> {
        self.shooting.validate()?;
        if !(self.slack >= 1.0) {
            return Err(Error::Config(format!("slack must be at least 1, got {}", self.slack)));
        }
        let (lo, hi) = self.bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("bracket {lo}:{hi} is empty")));
        }
        Ok(())
    }

    pub fn emits(&self, f: Format) -> bool {
        self.emit.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let c = RunConfig::parse("# run\nrtol = 1e-9\nbracket = 3.3:3.32\nemit = svg, json\nslack=1.2\n").unwrap();
        assert_eq!(c.shooting.rtol, 1e-9);
        assert_eq!(c.bracket, (3.3, 3.32));
        assert_eq!(c.emit, vec![Format::Json, Format::Svg]);
        assert_eq!(c.slack, 1.2);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("slack = 0.9").is_err());
        assert!(RunConfig::parse("rtol = 0").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        assert!(RunConfig::parse("bracket = 3.3").is_err());
        assert!(RunConfig::parse("emit = pdf").is_err());
    }
}
