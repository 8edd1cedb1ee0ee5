//! Channel, model and weight inputs shared by the subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use qmetro::channel::{channel_from_json, zoo_build, LindbladModel, ParamChannel, ZooSpec};

#[derive(Debug, Clone, Default, Args)]
pub struct ChannelArgs {
    /// Channel JSON: a file path or an inline JSON document.
    #[arg(long, conflicts_with = "zoo")]
    pub channel: Option<String>,
    /// Built-in channel family.
    #[arg(long)]
    pub zoo: Option<String>,
    /// Parameter of the built-in family, `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Generator subset for the tomography families.
    #[arg(long)]
    pub submodel: Option<String>,
    /// Comma-separated weights; default all ones.
    #[arg(long)]
    pub weights: Option<String>,
}

impl ChannelArgs {
    pub fn channel(&self) -> Result<ParamChannel> {
        match (&self.channel, &self.zoo) {
            (Some(src), None) => load_channel(src),
            (None, Some(name)) => {
                let mut spec = ZooSpec::new(name, &[]);
                spec.params = parse_params(&self.params)?;
                spec.submodel = self.submodel.clone();
                Ok(zoo_build(&spec)?)
            }
            _ => bail!("give one of --channel or --zoo"),
        }
    }

    pub fn weights(&self, p: usize) -> Result<Vec<f64>> {
        match &self.weights {
            None => Ok(vec![1.0; p]),
            Some(s) => {
                let w = parse_list(s)?;
                if w.len() != p {
                    bail!("{} weights given for {p} parameters", w.len());
                }
                Ok(w)
            }
        }
    }

    /// The Lindblad model named by `--zoo`, with `d` and `gamma` parameters.
    pub fn lindblad(&self) -> Result<LindbladModel> {
        let name = self.zoo.as_deref().ok_or_else(|| anyhow!("markovian bounds need --zoo <model>"))?;
        let params = parse_params(&self.params)?;
        let get = |k: &str| params.get(k).copied().ok_or_else(|| anyhow!("{name}: missing --param {k}=..."));
        let model = match name {
            "grover_dephasing" => LindbladModel::grover_dephasing(count(get("d")?)?, get("gamma")?)?,
            "grover_erasure" => LindbladModel::grover_erasure(count(get("d")?)?, get("gamma")?)?,
            "qubit_dephasing" => LindbladModel::qubit_dephasing(get("gamma")?)?,
            other => bail!("unknown Lindblad model `{other}`; known: grover_dephasing, grover_erasure, qubit_dephasing"),
        };
        Ok(model)
    }
}

fn count(v: f64) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 {
        bail!("expected a positive integer, got {v}");
    }
    Ok(v as usize)
}

/// Reads a channel from a file, or parses the argument itself when it looks
/// like a JSON object.
pub fn load_channel(src: &str) -> Result<ParamChannel> {
    let text = if src.trim_start().starts_with('{') {
        src.to_string()
    } else {
        std::fs::read_to_string(Path::new(src)).with_context(|| format!("reading channel file {src}"))?
    };
    Ok(channel_from_json(&text)?)
}

pub fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>> {
    items
        .iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("parameter `{kv}` is not KEY=VALUE"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("parameter `{k}`"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("`{t}` is not a number")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_and_lists() {
        let p = parse_params(&["eta=0.5".into(), " d = 3".into()]).unwrap();
        assert_eq!(p["eta"], 0.5);
        assert_eq!(p["d"], 3.0);
        assert!(parse_params(&["eta".into()]).is_err());
        assert_eq!(parse_list("1, 2.5,3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn zoo_and_weights() {
        let args = ChannelArgs {
            zoo: Some("phase_loss".into()),
            params: vec!["eta=0.5".into()],
            weights: Some("1,2".into()),
            ..Default::default()
        };
        let ch = args.channel().unwrap();
        assert_eq!(ch.num_params(), 2);
        assert_eq!(args.weights(2).unwrap(), vec![1.0, 2.0]);
        assert!(args.weights(3).is_err());
        assert!(ChannelArgs::default().channel().is_err());
    }

    #[test]
    fn inline_channel_json() {
        let ch = qmetro::channel::phase_dephasing(0.0, 0.5).unwrap();
        let text = qmetro::channel::channel_to_json(&ch);
        assert_eq!(load_channel(&text).unwrap(), ch);
    }
}
