//! Versioned binary checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u64 JSON-header length, the JSON
//! header (config, dims, global step, per-network parameter manifest,
//! optimizer manifest, and an opaque `extra` value for the caller), then one
//! f64 little-endian blob holding every parameter array followed by every
//! optimizer moment array in manifest order. Floats round-trip bitwise.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmath::{Adam, Param};

use super::{AgentConfig, AgentState};

const MAGIC: &[u8; 8] = b"LRLCKPT1";

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct NetMeta {
    name: String,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    name: String,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    lens: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: AgentConfig,
    obs_dim: usize,
    act_dim: usize,
    global_step: u64,
    nets: Vec<NetMeta>,
    adams: Vec<AdamMeta>,
    extra: serde_json::Value,
}

/// Save/load entry points for agent checkpoints.
pub struct Checkpoint;

impl Checkpoint {
    pub fn save(
        path: &Path,
        agent: &AgentState,
        global_step: u64,
        extra: serde_json::Value,
    ) -> io::Result<()> {
        let nets = agent.networks();
        let adams = adam_views(agent);
        let header = Header {
            version: 1,
            config: agent.cfg.clone(),
            obs_dim: agent.obs_dim,
            act_dim: agent.act_dim,
            global_step,
            nets: nets
                .iter()
                .map(|(name, params)| NetMeta {
                    name: name.to_string(),
                    params: params
                        .iter()
                        .map(|p| ParamMeta {
                            name: p.name.clone(),
                            shape: p.shape.clone(),
                        })
                        .collect(),
                })
                .collect(),
            adams: adams
                .iter()
                .map(|(name, adam)| AdamMeta {
                    name: name.to_string(),
                    lr: adam.lr,
                    beta1: adam.beta1,
                    beta2: adam.beta2,
                    epsilon: adam.epsilon,
                    step_count: adam.step_count,
                    lens: adam.moments().0.iter().map(|m| m.len()).collect(),
                })
                .collect(),
            extra,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for (_, params) in &nets {
            for p in params.iter() {
                write_f64s(&mut w, &p.data)?;
            }
        }
        for (_, adam) in &adams {
            let (m, v) = adam.moments();
            for arr in m.iter().chain(v.iter()) {
                write_f64s(&mut w, arr)?;
            }
        }
        w.flush()
    }

    pub fn load(path: &Path) -> io::Result<(AgentState, u64, serde_json::Value)> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let mut len_bytes = [0u8; 8];
        r.read_exact(&mut len_bytes)?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)?;
        if header.version != 1 {
            return Err(bad(&format!("unsupported checkpoint version {}", header.version)));
        }

        let mut agent = AgentState::new(header.config, header.obs_dim, header.act_dim, 0)
            .map_err(|e| bad(&e.to_string()))?;

        {
            let mut nets = agent_networks_mut(&mut agent);
            if nets.len() != header.nets.len() {
                return Err(bad("network count mismatch"));
            }
            for ((name, params), meta) in nets.iter_mut().zip(&header.nets) {
                if *name != meta.name || params.len() != meta.params.len() {
                    return Err(bad(&format!("network layout mismatch for {name}")));
                }
                for (p, pm) in params.iter_mut().zip(&meta.params) {
                    if p.shape != pm.shape {
                        return Err(bad(&format!("shape mismatch for {}", pm.name)));
                    }
                    read_f64s(&mut r, &mut p.data)?;
                }
            }
        }

        {
            let mut adams = adam_views_mut(&mut agent);
            if adams.len() != header.adams.len() {
                return Err(bad("optimizer count mismatch"));
            }
            for ((name, adam), meta) in adams.iter_mut().zip(&header.adams) {
                if *name != meta.name {
                    return Err(bad(&format!("optimizer order mismatch at {name}")));
                }
                adam.lr = meta.lr;
                adam.beta1 = meta.beta1;
                adam.beta2 = meta.beta2;
                adam.epsilon = meta.epsilon;
                let mut m = Vec::with_capacity(meta.lens.len());
                let mut v = Vec::with_capacity(meta.lens.len());
                for len in &meta.lens {
                    let mut arr = vec![0.0; *len];
                    read_f64s(&mut r, &mut arr)?;
                    m.push(arr);
                }
                for len in &meta.lens {
                    let mut arr = vec![0.0; *len];
                    read_f64s(&mut r, &mut arr)?;
                    v.push(arr);
                }
                adam
                    .restore(meta.step_count, m, v)
                    .map_err(|e| bad(&e.to_string()))?;
            }
        }

        Ok((agent, header.global_step, header.extra))
    }
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn write_f64s(w: &mut impl Write, data: &[f64]) -> io::Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, out: &mut [f64]) -> io::Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

fn adam_views(agent: &AgentState) -> Vec<(&'static str, &Adam)> {
    vec![
        ("encoder", &agent.opt_encoder),
        ("model", &agent.opt_model),
        ("policy", &agent.opt_policy),
        ("reward", &agent.opt_reward),
        ("q", &agent.opt_q),
        ("classifier", &agent.opt_classifier),
    ]
}

fn adam_views_mut(agent: &mut AgentState) -> Vec<(&'static str, &mut Adam)> {
    vec![
        ("encoder", &mut agent.opt_encoder),
        ("model", &mut agent.opt_model),
        ("policy", &mut agent.opt_policy),
        ("reward", &mut agent.opt_reward),
        ("q", &mut agent.opt_q),
        ("classifier", &mut agent.opt_classifier),
    ]
}

fn agent_networks_mut(agent: &mut AgentState) -> Vec<(&'static str, &mut [Param])> {
    let AgentState {
        encoder,
        encoder_target,
        model,
        policy,
        reward,
        q,
        q_target,
        classifier,
        ..
    } = agent;
    vec![
        ("encoder", encoder.params_mut()),
        ("encoder_target", encoder_target.params_mut()),
        ("model", model.params_mut()),
        ("policy", policy.params_mut()),
        ("reward", reward.params_mut()),
        ("q", q.params_mut()),
        ("q_target", q_target.params_mut()),
        ("classifier", classifier.params_mut()),
    ]
}
