//! TOML experiment config.
//!
//! Only `task` is required; every other field falls back to the task's
//! defaults (which may also depend on `model.kind`). Overrides of the form
//! `section.key=value` are applied to the document before it is interpreted,
//! so an override behaves exactly like editing the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::FormatError;
use crate::harness::{ExperimentConfig, ScheduleName, Task};
use crate::models::ModelKind;
use crate::operators::{ImageKind, Shape};
use crate::training::PinnWeights;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    task: Task,
    seeds: Option<Vec<u64>>,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    model: ModelDoc,
    #[serde(default)]
    train: TrainDoc,
    #[serde(default)]
    data: DataDoc,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    kind: Option<ModelKind>,
    width: Option<usize>,
    depth: Option<usize>,
    fourier_features: Option<usize>,
    fourier_scale: Option<f64>,
    omega0: Option<f64>,
    s0: Option<f64>,
    frequency_scale: Option<f64>,
    subnets_per_layer: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainDoc {
    epochs: Option<usize>,
    lr: Option<f64>,
    schedule: Option<ScheduleName>,
    final_fraction: Option<f64>,
    eval_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataDoc {
    image: Option<ImageKind>,
    height: Option<usize>,
    width: Option<usize>,
    channels: Option<usize>,
    factor: Option<usize>,
    views: Option<usize>,
    max_shift: Option<f64>,
    max_rotation_deg: Option<f64>,
    max_count: Option<f64>,
    angles: Option<usize>,
    resolution: Option<usize>,
    beta: Option<f64>,
    n_ic: Option<usize>,
    n_bc: Option<usize>,
    n_col: Option<usize>,
    eval_nx: Option<usize>,
    eval_nt: Option<usize>,
    data_seed: Option<u64>,
    shape: Option<Shape>,
    weights: Option<PinnWeights>,
}

macro_rules! fill {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $(if let Some(v) = $src.$f { $dst.$f = v; })+
    };
}

impl Document {
    fn resolve(self) -> ExperimentConfig {
        let kind = self.model.kind.unwrap_or(ModelKind::Nestnet);
        let mut c = ExperimentConfig::defaults_for(self.task, kind);
        fill!(c, self, seeds, out_dir);
        fill!(
            c.model,
            self.model,
            width,
            depth,
            fourier_features,
            fourier_scale,
            omega0,
            s0,
            frequency_scale,
            subnets_per_layer
        );
        fill!(c.train, self.train, epochs, lr, schedule, final_fraction, eval_every);
        fill!(
            c.data,
            self.data,
            image,
            height,
            width,
            channels,
            factor,
            views,
            max_shift,
            max_rotation_deg,
            max_count,
            angles,
            resolution,
            beta,
            n_ic,
            n_bc,
            n_col,
            eval_nx,
            eval_nt,
            data_seed,
            shape,
            weights
        );
        c
    }
}

fn located(text: &str, e: toml::de::Error) -> FormatError {
    let mut msg = e.message().trim().to_string();
    let (line, column) = match e.span() {
        Some(span) => {
            if let Some(snippet) = text.get(span.clone()).map(str::trim).filter(|s| !s.is_empty() && !s.contains('\n')) {
                msg = format!("{msg} `{snippet}`");
            }
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    FormatError::Config { line, column, msg }
}

/// Sets `key` (dotted path) in `table` from `key=value`. The value is read as
/// a TOML value when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), FormatError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| FormatError::ConfigValue(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(FormatError::ConfigValue(format!("bad override key '{key}'")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| FormatError::ConfigValue(format!("override '{key}': '{part}' is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, FormatError> {
    parse_config_with(text, &[])
}

/// Parses `text`, applies `overrides` in order, fills defaults and validates.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<ExperimentConfig, FormatError> {
    let doc: Document = toml::from_str(text).map_err(|e| located(text, e))?;
    let doc = if overrides.is_empty() {
        doc
    } else {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| located(text, e))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| FormatError::ConfigValue(e.to_string()))?;
        toml::from_str(&merged)
            .map_err(|e| FormatError::ConfigValue(format!("after overrides: {}", e.message().trim())))?
    };
    let cfg = doc.resolve();
    cfg.validate().map_err(|e| FormatError::ConfigValue(e.to_string()))?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<ExperimentConfig, FormatError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_config_with(&text, overrides)
}

/// Every field written out, so the text does not depend on defaults.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("task = \"image\"\n").unwrap();
        assert_eq!(c, ExperimentConfig::defaults(Task::Image));
        assert_eq!(c.train.epochs, 2000);
        assert_eq!(c.train.lr, 5e-3);
    }

    #[test]
    fn kind_dependent_defaults() {
        let c = parse_config("task = \"image\"\n[model]\nkind = \"wire_real\"\n").unwrap();
        assert_eq!((c.model.s0, c.model.omega0), (30.0, 20.0));
        let c = parse_config("task = \"image\"\n[model]\nkind = \"wire_real\"\nomega0 = 7.5\n").unwrap();
        assert_eq!(c.model.omega0, 7.5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("task = \"image\"\n[train]\nepochz = 3\n").unwrap_err();
        assert!(matches!(e, FormatError::Config { line: 3, .. }), "{e}");
        assert!(e.to_string().contains("epochz"));
        let e = parse_config("task = \"image\"\n[train]\nepochs = \"many\"\n").unwrap_err();
        assert!(matches!(e, FormatError::Config { line: 3, .. }), "{e}");
        let e = parse_config("[train]\nepochs = 3\n").unwrap_err();
        assert!(e.to_string().contains("task"), "{e}");
    }

    #[test]
    fn duplicate_key_is_named() {
        let e = parse_config("task = \"image\"\n[train]\nlr = 0.1\nlr = 0.2\n").unwrap_err();
        assert!(matches!(e, FormatError::Config { line: 4, .. }), "{e}");
        assert!(e.to_string().contains("lr"), "{e}");
    }

    #[test]
    fn overrides_equal_file_edits() {
        let base = "task = \"sisr\"\n[train]\nepochs = 10\n";
        let edited = "task = \"sisr\"\nseeds = [3]\n[train]\nepochs = 20\n[data]\nfactor = 2\nimage = \"checker\"\n";
        let over = ["train.epochs=20", "data.factor=2", "seeds=[3]", "data.image=checker"].map(String::from);
        assert_eq!(parse_config_with(base, &over).unwrap(), parse_config(edited).unwrap());
    }

    #[test]
    fn override_errors() {
        let base = "task = \"image\"\n";
        assert!(parse_config_with(base, &["train.epochs".into()]).is_err());
        assert!(parse_config_with(base, &["train.bogus=1".into()]).is_err());
        assert!(parse_config_with(base, &["task.x=1".into()]).is_err());
        assert!(parse_config_with(base, &["data.factor=0".into(), "task=sisr".into()]).is_err());
    }

    #[test]
    fn round_trip_defaults() {
        for task in Task::ALL {
            for kind in ModelKind::ALL {
                let mut c = ExperimentConfig::defaults_for(task, kind);
                c.data.shape = Shape::torus();
                c.train.lr = 0.1 + 0.2;
                let text = serialize_config(&c);
                assert_eq!(parse_config(&text).unwrap(), c, "{text}");
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_random(lr in 1e-6f64..1.0, ff in 0.01f64..1.0, beta in 0.1f64..50.0, seeds in prop::collection::vec(0u64..1_000_000, 1..6), w in 1usize..300) {
            let mut c = ExperimentConfig::defaults(Task::PinnConvection);
            c.train.lr = lr;
            c.train.final_fraction = ff;
            c.data.beta = beta;
            c.seeds = seeds;
            c.model.width = w;
            prop_assert_eq!(parse_config(&serialize_config(&c)).unwrap(), c);
        }
    }
}
