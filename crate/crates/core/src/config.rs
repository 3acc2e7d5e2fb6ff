//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! loss.kind = thresholded
//! loss.t = 0.3        # trailing comments are allowed
//! pyramid.scale_resolutions = 1, 1, 2, 4
//! ```
//!
//! Every key has a default; unknown keys and bad values are errors that
//! carry the line number. `--set key=value` overrides go through the same
//! parser.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::RobustnessConfig;
use crate::loss::LossKind;
use crate::matcher::{ConsistencyConfig, MatchConfig, SearchSchedule, SearchStep};
use crate::pyramid::{PyramidConfig, PyramidMode};
use crate::synth::SynthConfig;
use crate::trainer::{Architecture, TrainConfig};

/// Evaluation settings beyond the robustness sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub robustness: RobustnessConfig,
    pub seed: u64,
    /// Pixel distance of the fixed-distance negatives in the histogram.
    pub histogram_distance: f64,
    pub histogram_samples: usize,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            robustness: RobustnessConfig::default(),
            seed: 0,
            histogram_distance: 10.0,
            histogram_samples: 2000,
            histogram_bins: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub synth: SynthConfig,
    /// Number of pairs written by `synth`.
    pub synth_count: usize,
    pub train: TrainConfig,
    pub pyramid: PyramidConfig,
    pub matcher: MatchConfig,
    pub consistency: ConsistencyConfig,
    pub eval: EvalConfig,
    /// Write invalid flow pixels as the 1e9 sentinel.
    pub flo_sentinel: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            // 128 px keeps the quarter-resolution scale as wide as a
            // desk-net patch.
            synth: SynthConfig {
                width: 128,
                height: 128,
                ..SynthConfig::default()
            },
            synth_count: 8,
            train: TrainConfig::default(),
            pyramid: PyramidConfig::default(),
            matcher: MatchConfig::default(),
            consistency: ConsistencyConfig::default(),
            eval: EvalConfig::default(),
            flo_sentinel: false,
        }
    }
}

/// All recognised keys, in output order.
pub const KEYS: &[&str] = &[
    "synth.seed",
    "synth.count",
    "synth.width",
    "synth.height",
    "synth.max_displacement",
    "synth.occluders",
    "synth.noise",
    "synth.bumps",
    "train.seed",
    "train.architecture",
    "train.lr_start",
    "train.lr_end",
    "train.momentum",
    "train.weight_decay",
    "train.batch_size",
    "train.total_samples",
    "train.resolution_levels",
    "train.select_nonzero",
    "train.log_every",
    "loss.kind",
    "loss.m",
    "loss.t",
    "loss.g",
    "loss.mining_factor",
    "negative.near_probability",
    "negative.near_radius",
    "negative.far_cap",
    "pyramid.mode",
    "pyramid.scale_resolutions",
    "pyramid.lowpass",
    "pyramid.extra_scale2_lowpass",
    "matcher.seed",
    "matcher.max_displacement",
    "matcher.schedule",
    "consistency.epsilon",
    "consistency.secondary",
    "consistency.secondary_seed",
    "eval.seed",
    "eval.negatives_per_pixel",
    "eval.pixel_stride",
    "eval.histogram_distance",
    "eval.histogram_samples",
    "eval.histogram_bins",
    "output.flo_sentinel",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| format!("bad value `{value}` for `{key}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("bad value `{value}` for `{key}`: expected true or false")),
    }
}

fn parse_mode(value: &str) -> std::result::Result<PyramidMode, String> {
    match value {
        "multi_resolution" => Ok(PyramidMode::MultiResolution),
        "legacy" => Ok(PyramidMode::Legacy),
        _ => Err(format!("bad value `{value}` for `pyramid.mode`: expected multi_resolution or legacy")),
    }
}

/// `radius:iterations[:sub]` steps separated by commas, e.g. `2:4, 1:2:sub`.
pub fn parse_schedule(value: &str) -> std::result::Result<SearchSchedule, String> {
    let mut steps = Vec::new();
    for part in value.split(',') {
        let fields: Vec<&str> = part.trim().split(':').collect();
        let bad = || format!("bad schedule step `{}` (expected radius:iterations[:sub])", part.trim());
        if !(2..=3).contains(&fields.len()) {
            return Err(bad());
        }
        let subpixel = match fields.get(2) {
            None => false,
            Some(&"sub") => true,
            Some(_) => return Err(bad()),
        };
        steps.push(SearchStep {
            radius: fields[0].parse().map_err(|_| bad())?,
            iterations: fields[1].parse().map_err(|_| bad())?,
            subpixel,
        });
    }
    Ok(SearchSchedule { steps })
}

pub fn format_schedule(s: &SearchSchedule) -> String {
    s.steps
        .iter()
        .map(|st| format!("{}:{}{}", st.radius, st.iterations, if st.subpixel { ":sub" } else { "" }))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Config {
    /// Sets one key. The error message names the key.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value;
        match key {
            "synth.seed" => self.synth.seed = parse(key, v)?,
            "synth.count" => self.synth_count = parse(key, v)?,
            "synth.width" => self.synth.width = parse(key, v)?,
            "synth.height" => self.synth.height = parse(key, v)?,
            "synth.max_displacement" => self.synth.max_displacement = parse(key, v)?,
            "synth.occluders" => self.synth.occluder_count = parse(key, v)?,
            "synth.noise" => self.synth.noise = parse(key, v)?,
            "synth.bumps" => self.synth.bumps = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.architecture" => self.train.architecture = parse::<Architecture>(key, v)?,
            "train.lr_start" => self.train.lr_start = parse(key, v)?,
            "train.lr_end" => self.train.lr_end = parse(key, v)?,
            "train.momentum" => self.train.momentum = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.total_samples" => self.train.total_samples = parse(key, v)?,
            "train.resolution_levels" => self.train.resolution_levels = parse(key, v)?,
            "train.select_nonzero" => self.train.select_nonzero = parse_bool(key, v)?,
            "train.log_every" => self.train.log_every = parse(key, v)?,
            "loss.kind" => self.train.loss.kind = parse::<LossKind>(key, v)?,
            "loss.m" => self.train.loss.margin = parse(key, v)?,
            "loss.t" => self.train.loss.threshold = parse(key, v)?,
            "loss.g" => self.train.loss.gap = parse(key, v)?,
            "loss.mining_factor" => self.train.loss.mining_factor = parse(key, v)?,
            "negative.near_probability" => self.train.negative.near_probability = parse(key, v)?,
            "negative.near_radius" => self.train.negative.near_radius = parse(key, v)?,
            "negative.far_cap" => {
                self.train.negative.far_cap = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "pyramid.mode" => self.pyramid.mode = parse_mode(v)?,
            "pyramid.scale_resolutions" => {
                self.pyramid.scale_resolutions = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "pyramid.lowpass" => self.pyramid.lowpass_factor = parse(key, v)?,
            "pyramid.extra_scale2_lowpass" => self.pyramid.extra_scale2_lowpass = parse(key, v)?,
            "matcher.seed" => self.matcher.seed = parse(key, v)?,
            "matcher.max_displacement" => self.matcher.max_displacement = parse(key, v)?,
            "matcher.schedule" => self.matcher.schedule = parse_schedule(v)?,
            "consistency.epsilon" => self.consistency.epsilon = parse(key, v)?,
            "consistency.secondary" => self.consistency.secondary_enabled = parse_bool(key, v)?,
            "consistency.secondary_seed" => self.consistency.secondary_seed = parse(key, v)?,
            "eval.seed" => self.eval.seed = parse(key, v)?,
            "eval.negatives_per_pixel" => self.eval.robustness.negatives_per_pixel = parse(key, v)?,
            "eval.pixel_stride" => self.eval.robustness.pixel_stride = parse(key, v)?,
            "eval.histogram_distance" => self.eval.histogram_distance = parse(key, v)?,
            "eval.histogram_samples" => self.eval.histogram_samples = parse(key, v)?,
            "eval.histogram_bins" => self.eval.histogram_bins = parse(key, v)?,
            "output.flo_sentinel" => self.flo_sentinel = parse_bool(key, v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Current value of a key in the form `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        Some(match key {
            "synth.seed" => self.synth.seed.to_string(),
            "synth.count" => self.synth_count.to_string(),
            "synth.width" => self.synth.width.to_string(),
            "synth.height" => self.synth.height.to_string(),
            "synth.max_displacement" => self.synth.max_displacement.to_string(),
            "synth.occluders" => self.synth.occluder_count.to_string(),
            "synth.noise" => self.synth.noise.to_string(),
            "synth.bumps" => self.synth.bumps.to_string(),
            "train.seed" => t.seed.to_string(),
            "train.architecture" => t.architecture.to_string(),
            "train.lr_start" => t.lr_start.to_string(),
            "train.lr_end" => t.lr_end.to_string(),
            "train.momentum" => t.momentum.to_string(),
            "train.weight_decay" => t.weight_decay.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.total_samples" => t.total_samples.to_string(),
            "train.resolution_levels" => t.resolution_levels.to_string(),
            "train.select_nonzero" => t.select_nonzero.to_string(),
            "train.log_every" => t.log_every.to_string(),
            "loss.kind" => t.loss.kind.to_string(),
            "loss.m" => t.loss.margin.to_string(),
            "loss.t" => t.loss.threshold.to_string(),
            "loss.g" => t.loss.gap.to_string(),
            "loss.mining_factor" => t.loss.mining_factor.to_string(),
            "negative.near_probability" => t.negative.near_probability.to_string(),
            "negative.near_radius" => t.negative.near_radius.to_string(),
            "negative.far_cap" => t.negative.far_cap.map_or("auto".into(), |c| c.to_string()),
            "pyramid.mode" => match self.pyramid.mode {
                PyramidMode::MultiResolution => "multi_resolution".into(),
                PyramidMode::Legacy => "legacy".into(),
            },
            "pyramid.scale_resolutions" => self
                .pyramid
                .scale_resolutions
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            "pyramid.lowpass" => self.pyramid.lowpass_factor.to_string(),
            "pyramid.extra_scale2_lowpass" => self.pyramid.extra_scale2_lowpass.to_string(),
            "matcher.seed" => self.matcher.seed.to_string(),
            "matcher.max_displacement" => self.matcher.max_displacement.to_string(),
            "matcher.schedule" => format_schedule(&self.matcher.schedule),
            "consistency.epsilon" => self.consistency.epsilon.to_string(),
            "consistency.secondary" => self.consistency.secondary_enabled.to_string(),
            "consistency.secondary_seed" => self.consistency.secondary_seed.to_string(),
            "eval.seed" => self.eval.seed.to_string(),
            "eval.negatives_per_pixel" => self.eval.robustness.negatives_per_pixel.to_string(),
            "eval.pixel_stride" => self.eval.robustness.pixel_stride.to_string(),
            "eval.histogram_distance" => self.eval.histogram_distance.to_string(),
            "eval.histogram_samples" => self.eval.histogram_samples.to_string(),
            "eval.histogram_bins" => self.eval.histogram_bins.to_string(),
            "output.flo_sentinel" => self.flo_sentinel.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err("missing key before `=`".into()));
            }
            self.set(key, value).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--set expects key=value, got `{o}`")))?;
            self.set(key.trim(), value.trim())
                .map_err(|m| Error::InvalidArgument(format!("--set {o}: {m}")))?;
        }
        Ok(())
    }

    /// Every key with its current value; `from_text` reads it back unchanged.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.pyramid.validate()?;
        self.matcher.schedule.validate()?;
        if self.synth_count == 0 {
            return Err(Error::InvalidArgument("synth.count must be positive".into()));
        }
        if !(self.consistency.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("consistency.epsilon must be non-negative".into()));
        }
        if self.eval.robustness.negatives_per_pixel == 0 || self.eval.robustness.pixel_stride == 0 {
            return Err(Error::InvalidArgument("eval sampling counts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = Config::default();
        assert_eq!(Config::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_gettable_and_settable() {
        let mut cfg = Config::default();
        for k in KEYS {
            let v = cfg.get(k).unwrap();
            cfg.set(k, &v).unwrap();
        }
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn parses_comments_and_dotted_keys() {
        let cfg = Config::from_text("# header\n\nloss.t = 0.25  # note\nloss.kind=hinge\n").unwrap();
        assert_eq!(cfg.train.loss.threshold, 0.25);
        assert_eq!(cfg.train.loss.kind, LossKind::Hinge);
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = Config::from_text("loss.t = 0.3\n\nloss.tt = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("loss.tt"), "{msg}");
    }

    #[test]
    fn malformed_line_and_value() {
        assert!(matches!(Config::from_text("loss.t 0.3"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(Config::from_text("\nloss.t = x"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn schedule_syntax() {
        let s = parse_schedule("2:4, 1:2:sub").unwrap();
        assert_eq!(s, SearchSchedule::default());
        assert_eq!(parse_schedule(&format_schedule(&SearchSchedule::extended())).unwrap(), SearchSchedule::extended());
        assert!(parse_schedule("2").is_err());
        assert!(parse_schedule("2:4:fast").is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = Config::default();
        cfg.apply_overrides(&["train.seed=9", "negative.far_cap = 40"]).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.negative.far_cap, Some(40.0));
        assert!(cfg.apply_overrides(&["nope=1"]).is_err());
        assert!(cfg.apply_overrides(&["train.seed"]).is_err());
    }
}
