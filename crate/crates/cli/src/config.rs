//! Flat TOML run configuration: model keys and training keys side by side.
//!
//! ```toml
//! hidden_dim = 64
//! learning_rate = 0.002
//! epochs = 40
//! scenarios = ["uniform", "agentwise"]
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use midas::data::Sport;
use midas::model::ModelConfig;
use midas::training::TrainConfig;
use serde::{de::DeserializeOwned, Serialize};
use toml::{Table, Value};

fn as_table<T: Serialize>(value: &T) -> Result<Table> {
    match Value::try_from(value)? {
        Value::Table(t) => Ok(t),
        _ => unreachable!("config structs serialize to tables"),
    }
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, keys: &Table) -> Result<T> {
    let mut table = as_table(base)?;
    for (k, v) in keys {
        table.insert(k.clone(), v.clone());
    }
    Ok(Value::Table(table).try_into()?)
}

pub fn parse(text: &str, sport: Sport) -> Result<(ModelConfig, TrainConfig)> {
    let user: Table = text.parse().context("config is not valid TOML")?;
    let model_base = ModelConfig::default();
    let train_base = TrainConfig::for_sport(sport);
    let model_keys = as_table(&model_base)?;
    let mut train_keys = as_table(&train_base)?;
    train_keys.insert("max_batches".into(), Value::Integer(0));
    let (mut m, mut t) = (Table::new(), Table::new());
    for (k, v) in user {
        if model_keys.contains_key(&k) {
            m.insert(k, v);
        } else if train_keys.contains_key(&k) {
            t.insert(k, v);
        } else {
            bail!("unknown config key '{k}'");
        }
    }
    let model: ModelConfig = overlay(&model_base, &m).context("invalid model settings")?;
    let train: TrainConfig = overlay(&train_base, &t).context("invalid training settings")?;
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

pub fn load(path: Option<&Path>, sport: Sport) -> Result<(ModelConfig, TrainConfig)> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            parse(&text, sport)
        }
        None => Ok((ModelConfig::default(), TrainConfig::for_sport(sport))),
    }
}
