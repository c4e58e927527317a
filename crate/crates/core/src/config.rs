//! Experiment configuration as plain `key=value` text.
//!
//! Blank lines and lines starting with `#` are skipped. Unknown keys are
//! rejected. Later assignments win, so layering defaults, a file, then
//! command-line overrides gives flags > file > defaults.

use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cube::PdsiCube;
use crate::error::{arg_err, Error, Result};
use crate::labels::ClassScheme;
use crate::models::{ModelKind, TrainSettings};
use crate::synth::SynthParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub region: String,
    pub models: Vec<ModelKind>,
    /// Class thresholds; a single value is the binary drought cut.
    pub thresholds: Vec<f64>,
    /// When set, the binary threshold is this quantile of the cube's values.
    pub threshold_quantile: Option<f64>,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Fractions of area removed by the crop study.
    pub crop_fracs: Vec<f64>,
    /// Kept area fractions for the zoom study, descending.
    pub zoom_areas: Vec<f64>,
    pub train_frac: f64,
    /// Model settings; `train.window.horizon` is replaced per run.
    pub train: TrainSettings,
    pub synth: SynthParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            region: "region".into(),
            models: ModelKind::ALL.to_vec(),
            thresholds: vec![crate::labels::DROUGHT_THRESHOLD],
            threshold_quantile: None,
            horizons: vec![1, 3, 6, 9, 12],
            seeds: vec![0, 1, 2, 3, 4],
            crop_fracs: (0..10).map(|i| i as f64 / 10.0).collect(),
            zoom_areas: vec![1.0, 0.75, 0.53, 0.27],
            train_frac: 0.7,
            train: TrainSettings::default(),
            synth: SynthParams::default(),
        }
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Argument(format!("bad value {v:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s)).collect()
}

impl ExperimentConfig {
    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let (lr, gb, cl, sy) = (&t.logreg, &t.gbdt, &t.convlstm, &self.synth);
        vec![
            ("region", self.region.clone()),
            ("models", list(&self.models)),
            ("thresholds", list(&self.thresholds)),
            ("threshold_quantile", self.threshold_quantile.map(|q| q.to_string()).unwrap_or_default()),
            ("horizons", list(&self.horizons)),
            ("seeds", list(&self.seeds)),
            ("crop_fracs", list(&self.crop_fracs)),
            ("zoom_areas", list(&self.zoom_areas)),
            ("train_frac", self.train_frac.to_string()),
            ("val_frac", t.val_frac.to_string()),
            ("window.history_len", t.window.history_len.to_string()),
            ("window.neighborhood", t.window.neighborhood.to_string()),
            ("rolling.window", t.rolling_window.to_string()),
            ("logreg.l2", lr.l2.to_string()),
            ("logreg.max_epochs", lr.max_epochs.to_string()),
            ("logreg.step_size", lr.step_size.to_string()),
            ("logreg.tol", lr.tol.to_string()),
            ("logreg.standardize", lr.standardize.to_string()),
            ("gbdt.max_depth", gb.max_depth.to_string()),
            ("gbdt.n_rounds", gb.n_rounds.to_string()),
            ("gbdt.learning_rate", gb.learning_rate.to_string()),
            ("gbdt.lambda", gb.lambda.to_string()),
            ("gbdt.gamma", gb.gamma.to_string()),
            ("gbdt.min_child_weight", gb.min_child_weight.to_string()),
            ("gbdt.patience", gb.patience.to_string()),
            ("convlstm.embed_channels", cl.embed_channels.to_string()),
            ("convlstm.hidden_channels", cl.hidden_channels.to_string()),
            ("convlstm.kernel", cl.kernel.to_string()),
            ("convlstm.history_len", cl.history_len.to_string()),
            ("convlstm.step_size", cl.step_size.to_string()),
            ("convlstm.beta1", cl.beta1.to_string()),
            ("convlstm.beta2", cl.beta2.to_string()),
            ("convlstm.eps", cl.eps.to_string()),
            ("convlstm.batch_size", cl.batch_size.to_string()),
            ("convlstm.max_epochs", cl.max_epochs.to_string()),
            ("convlstm.patience", cl.patience.to_string()),
            ("synth.t_len", sy.t_len.to_string()),
            ("synth.rows", sy.rows.to_string()),
            ("synth.cols", sy.cols.to_string()),
            ("synth.ar_coeff", sy.ar_coeff.to_string()),
            ("synth.spatial_sigma", sy.spatial_sigma.to_string()),
            ("synth.seasonal_amp", sy.seasonal_amp.to_string()),
            ("synth.noise_sd", sy.noise_sd.to_string()),
            ("synth.value_scale", sy.value_scale.to_string()),
            ("synth.seed", sy.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "region" => self.region = v.to_string(),
            "models" => self.models = parse_list(key, v)?,
            "thresholds" => self.thresholds = parse_list(key, v)?,
            "threshold_quantile" => self.threshold_quantile = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "horizons" => self.horizons = parse_list(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "crop_fracs" => self.crop_fracs = parse_list(key, v)?,
            "zoom_areas" => self.zoom_areas = parse_list(key, v)?,
            "train_frac" => self.train_frac = parse(key, v)?,
            "val_frac" => t.val_frac = parse(key, v)?,
            "window.history_len" => t.window.history_len = parse(key, v)?,
            "window.neighborhood" => t.window.neighborhood = parse(key, v)?,
            "rolling.window" => t.rolling_window = parse(key, v)?,
            "logreg.l2" => t.logreg.l2 = parse(key, v)?,
            "logreg.max_epochs" => t.logreg.max_epochs = parse(key, v)?,
            "logreg.step_size" => t.logreg.step_size = parse(key, v)?,
            "logreg.tol" => t.logreg.tol = parse(key, v)?,
            "logreg.standardize" => t.logreg.standardize = parse(key, v)?,
            "gbdt.max_depth" => t.gbdt.max_depth = parse(key, v)?,
            "gbdt.n_rounds" => t.gbdt.n_rounds = parse(key, v)?,
            "gbdt.learning_rate" => t.gbdt.learning_rate = parse(key, v)?,
            "gbdt.lambda" => t.gbdt.lambda = parse(key, v)?,
            "gbdt.gamma" => t.gbdt.gamma = parse(key, v)?,
            "gbdt.min_child_weight" => t.gbdt.min_child_weight = parse(key, v)?,
            "gbdt.patience" => t.gbdt.patience = parse(key, v)?,
            "convlstm.embed_channels" => t.convlstm.embed_channels = parse(key, v)?,
            "convlstm.hidden_channels" => t.convlstm.hidden_channels = parse(key, v)?,
            "convlstm.kernel" => t.convlstm.kernel = parse(key, v)?,
            "convlstm.history_len" => t.convlstm.history_len = parse(key, v)?,
            "convlstm.step_size" => t.convlstm.step_size = parse(key, v)?,
            "convlstm.beta1" => t.convlstm.beta1 = parse(key, v)?,
            "convlstm.beta2" => t.convlstm.beta2 = parse(key, v)?,
            "convlstm.eps" => t.convlstm.eps = parse(key, v)?,
            "convlstm.batch_size" => t.convlstm.batch_size = parse(key, v)?,
            "convlstm.max_epochs" => t.convlstm.max_epochs = parse(key, v)?,
            "convlstm.patience" => t.convlstm.patience = parse(key, v)?,
            "synth.t_len" => self.synth.t_len = parse(key, v)?,
            "synth.rows" => self.synth.rows = parse(key, v)?,
            "synth.cols" => self.synth.cols = parse(key, v)?,
            "synth.ar_coeff" => self.synth.ar_coeff = parse(key, v)?,
            "synth.spatial_sigma" => self.synth.spatial_sigma = parse(key, v)?,
            "synth.seasonal_amp" => self.synth.seasonal_amp = parse(key, v)?,
            "synth.noise_sd" => self.synth.noise_sd = parse(key, v)?,
            "synth.value_scale" => self.synth.value_scale = parse(key, v)?,
            "synth.seed" => self.synth.seed = parse(key, v)?,
            other => return arg_err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("config line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| e.context(format!("config line {}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical `key=value` dump; feeding it back reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// First 16 hex digits of the SHA-256 of [`to_text`](Self::to_text).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.iter().any(|&h| h == 0) {
            return arg_err("horizons must be >= 1");
        }
        if self.thresholds.is_empty() {
            return arg_err("at least one threshold is required");
        }
        if self.threshold_quantile.is_some_and(|q| !(0.0..=1.0).contains(&q)) {
            return arg_err("threshold_quantile must lie in [0, 1]");
        }
        if self.threshold_quantile.is_some() && self.thresholds.len() != 1 {
            return arg_err("threshold_quantile needs a binary scheme");
        }
        ClassScheme::new(self.thresholds.clone())?;
        Ok(())
    }

    /// Class scheme for `cube`, resolving `threshold_quantile` if set.
    pub fn scheme_for(&self, cube: &PdsiCube) -> Result<ClassScheme> {
        self.validate()?;
        match self.threshold_quantile {
            Some(q) => Ok(ClassScheme::binary(cube.quantile(q)? as f64)),
            None => ClassScheme::new(self.thresholds.clone()),
        }
    }

    /// Model settings with the forecast horizon filled in.
    pub fn settings_for(&self, horizon: usize) -> TrainSettings {
        let mut s = self.train.clone();
        s.window.horizon = horizon;
        s.convlstm.horizon = horizon;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_hash() {
        let mut c = ExperimentConfig::default();
        c.set("models", "logreg,convlstm").unwrap();
        c.set("threshold_quantile", "0.3").unwrap();
        c.set("gbdt.learning_rate", "0.05").unwrap();
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn later_lines_win_and_unknown_keys_fail() {
        let c = ExperimentConfig::from_text("# comment\nhorizons=1,3\n\nhorizons=6\n").unwrap();
        assert_eq!(c.horizons, vec![6]);
        assert!(ExperimentConfig::from_text("horizon=1").is_err());
        assert!(ExperimentConfig::from_text("horizons").is_err());
        assert!(ExperimentConfig::from_text("horizons=x").is_err());
    }

    #[test]
    fn scheme_resolution() {
        let cube = PdsiCube::new(1, 1, 4, 0, vec![-3.0, -1.0, 0.0, 2.0]).unwrap();
        let c = ExperimentConfig::default();
        assert_eq!(c.scheme_for(&cube).unwrap().thresholds(), &[-2.0]);
        let c = ExperimentConfig::from_text("thresholds=-1,1").unwrap();
        assert_eq!(c.scheme_for(&cube).unwrap().n_classes(), 3);
        let c = ExperimentConfig::from_text("threshold_quantile=0.5").unwrap();
        assert!(c.scheme_for(&cube).unwrap().is_binary());
    }
}
