//! Flat key/value configuration files.
//!
//! The format is one `key = value` pair per line with dotted keys,
//! `#` comments, and blank lines. Lists are written `[a, b]`. The same
//! syntax serves parameter-range files, CLAHE settings, and the training
//! configuration, so configs stay diff-able and hashable.

use std::collections::BTreeMap;
use std::path::Path;

use crate::clahe::ClaheParams;
use crate::degrade::ParamRanges;
use crate::error::{Error, Result};

/// Parsed flat configuration with sorted keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::invalid(format!("config line {}: empty key", lineno + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key {key}: expected a number, got {v:?}"))),
        }
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key {key}: expected an integer, got {v:?}"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") | Some("1") => Ok(Some(true)),
            Some("false") | Some("0") => Ok(Some(false)),
            Some(v) => Err(Error::invalid(format!(
                "config key {key}: expected true/false, got {v:?}"
            ))),
        }
    }

    /// Parses `[a, b, ...]` (brackets optional) into a list of numbers.
    pub fn get_list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
                let items: Result<Vec<f64>> = inner
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::invalid(format!("config key {key}: bad list element {s:?}"))
                        })
                    })
                    .collect();
                Ok(Some(items?))
            }
        }
    }

    pub fn get_interval(&self, key: &str) -> Result<Option<(f64, f64)>> {
        match self.get_list_f64(key)? {
            None => Ok(None),
            Some(items) if items.len() == 2 => Ok(Some((items[0], items[1]))),
            Some(items) => Err(Error::invalid(format!(
                "config key {key}: expected [lo, hi], got {} elements",
                items.len()
            ))),
        }
    }

    /// Canonical text form: sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

fn interval_text(r: (f64, f64)) -> String {
    format!("[{}, {}]", r.0, r.1)
}

/// Reads `ranges.*` keys (the `ranges.` prefix is optional) on top of the
/// given defaults.
pub fn ranges_from_config(cfg: &FlatConfig, defaults: ParamRanges) -> Result<ParamRanges> {
    let mut r = defaults;
    let field = |cfg: &FlatConfig, name: &str, slot: &mut (f64, f64)| -> Result<()> {
        let prefixed = format!("ranges.{name}");
        if let Some(v) = cfg.get_interval(&prefixed)?.or(cfg.get_interval(name)?) {
            *slot = v;
        }
        Ok(())
    };
    field(cfg, "alpha", &mut r.alpha)?;
    field(cfg, "beta", &mut r.beta)?;
    field(cfg, "gamma", &mut r.gamma)?;
    field(cfg, "bias_center_row", &mut r.bias_center_row)?;
    field(cfg, "bias_center_col", &mut r.bias_center_col)?;
    field(cfg, "bias_radius", &mut r.bias_radius)?;
    field(cfg, "bias_amplitude", &mut r.bias_amplitude)?;
    field(cfg, "bias_blur_sigma", &mut r.bias_blur_sigma)?;
    field(cfg, "blur_sigma", &mut r.blur_sigma)?;
    field(cfg, "noise_std", &mut r.noise_std)?;
    field(cfg, "spot_center_row", &mut r.spot_center_row)?;
    field(cfg, "spot_center_col", &mut r.spot_center_col)?;
    field(cfg, "spot_radius", &mut r.spot_radius)?;
    field(cfg, "spot_amplitude", &mut r.spot_amplitude)?;
    field(cfg, "spot_blur_sigma", &mut r.spot_blur_sigma)?;
    for key in ["ranges.spot_count", "spot_count"] {
        if let Some(items) = cfg.get_list_f64(key)? {
            if items.len() != 2 || items.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                return Err(Error::invalid(format!(
                    "config key {key}: expected [lo, hi] nonnegative integers"
                )));
            }
            r.spot_count = (items[0] as u32, items[1] as u32);
            break;
        }
    }
    r.validate()?;
    Ok(r)
}

/// Dumps a range set back into `ranges.*` keys.
pub fn ranges_to_config(r: &ParamRanges, cfg: &mut FlatConfig) {
    cfg.set("ranges.alpha", interval_text(r.alpha));
    cfg.set("ranges.beta", interval_text(r.beta));
    cfg.set("ranges.gamma", interval_text(r.gamma));
    cfg.set("ranges.bias_center_row", interval_text(r.bias_center_row));
    cfg.set("ranges.bias_center_col", interval_text(r.bias_center_col));
    cfg.set("ranges.bias_radius", interval_text(r.bias_radius));
    cfg.set("ranges.bias_amplitude", interval_text(r.bias_amplitude));
    cfg.set("ranges.bias_blur_sigma", interval_text(r.bias_blur_sigma));
    cfg.set("ranges.blur_sigma", interval_text(r.blur_sigma));
    cfg.set("ranges.noise_std", interval_text(r.noise_std));
    cfg.set(
        "ranges.spot_count",
        format!("[{}, {}]", r.spot_count.0, r.spot_count.1),
    );
    cfg.set("ranges.spot_center_row", interval_text(r.spot_center_row));
    cfg.set("ranges.spot_center_col", interval_text(r.spot_center_col));
    cfg.set("ranges.spot_radius", interval_text(r.spot_radius));
    cfg.set("ranges.spot_amplitude", interval_text(r.spot_amplitude));
    cfg.set("ranges.spot_blur_sigma", interval_text(r.spot_blur_sigma));
}

/// Reads `clahe.clip_limit` and `clahe.tile_grid` on top of the defaults
/// (2.0 and [8, 8]).
pub fn clahe_from_config(cfg: &FlatConfig) -> Result<ClaheParams> {
    let mut p = ClaheParams::default();
    if let Some(v) = cfg.get_f64("clahe.clip_limit")? {
        p.clip_limit = v;
    }
    if let Some(items) = cfg.get_list_f64("clahe.tile_grid")? {
        if items.len() != 2 || items.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
            return Err(Error::invalid(
                "config key clahe.tile_grid: expected [rows, cols] positive integers",
            ));
        }
        p.tile_grid = (items[0] as usize, items[1] as usize);
    }
    ClaheParams::new(p.clip_limit, p.tile_grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_values() {
        let text = "\n# a comment\nclahe.clip_limit = 3.5\nclahe.tile_grid = [4, 4]\nranges.alpha=[0.6,0.9]\n";
        let cfg = FlatConfig::parse(text).unwrap();
        assert_eq!(cfg.get_f64("clahe.clip_limit").unwrap(), Some(3.5));
        assert_eq!(cfg.get_interval("ranges.alpha").unwrap(), Some((0.6, 0.9)));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(FlatConfig::parse("no equals sign").is_err());
        assert!(FlatConfig::parse("= value").is_err());
        let cfg = FlatConfig::parse("k = not_a_number").unwrap();
        assert!(cfg.get_f64("k").is_err());
    }

    #[test]
    fn ranges_round_trip_through_config() {
        let r = ParamRanges::default_at(128);
        let mut cfg = FlatConfig::new();
        ranges_to_config(&r, &mut cfg);
        let parsed = FlatConfig::parse(&cfg.to_text()).unwrap();
        let back = ranges_from_config(&parsed, ParamRanges::identity()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bare_field_names_are_accepted_for_ranges() {
        let cfg = FlatConfig::parse("alpha = [0.7, 0.8]\nspot_count = [1, 2]\n").unwrap();
        let r = ranges_from_config(&cfg, ParamRanges::default_at(64)).unwrap();
        assert_eq!(r.alpha, (0.7, 0.8));
        assert_eq!(r.spot_count, (1, 2));
    }

    #[test]
    fn clahe_defaults_and_overrides() {
        let cfg = FlatConfig::parse("").unwrap();
        let p = clahe_from_config(&cfg).unwrap();
        assert_eq!(p.clip_limit, 2.0);
        assert_eq!(p.tile_grid, (8, 8));

        let cfg = FlatConfig::parse("clahe.clip_limit = 4\nclahe.tile_grid = [2, 3]\n").unwrap();
        let p = clahe_from_config(&cfg).unwrap();
        assert_eq!(p.clip_limit, 4.0);
        assert_eq!(p.tile_grid, (2, 3));
    }

    #[test]
    fn invalid_range_bounds_fail_validation() {
        let cfg = FlatConfig::parse("ranges.gamma = [0.5, 1.5]\n").unwrap();
        assert!(ranges_from_config(&cfg, ParamRanges::default_at(64)).is_err());
    }
}
