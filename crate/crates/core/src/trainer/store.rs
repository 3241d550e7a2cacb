//! Agent checkpoints: a directory holding `config.json`, `critic{k}.uwck`
//! and `policy.uwck`. Target networks and optimizer moments are not stored;
//! a loaded agent starts with targets equal to the online networks.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nets::checkpoint::{load_mlp, load_policy, save_mlp, save_policy};
use crate::trainer::agent::Agent;
use crate::trainer::config::TrainConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const POLICY_FILE: &str = "policy.uwck";

pub fn critic_file(k: usize) -> String {
    format!("critic{k}.uwck")
}

/// Writes the checkpoint and returns the paths of every file written.
pub fn save_agent(dir: &Path, agent: &Agent) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, agent.config.to_json())?;
    written.push(cfg_path);
    for (k, c) in agent.critics.iter().enumerate() {
        let p = dir.join(critic_file(k));
        save_mlp(&p, c)?;
        written.push(p);
    }
    let p = dir.join(POLICY_FILE);
    save_policy(&p, &agent.policy)?;
    written.push(p);
    Ok(written)
}

pub fn load_agent(dir: &Path) -> Result<Agent> {
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("checkpoint directory {} not found", dir.display()),
        )));
    }
    let cfg = TrainConfig::load(dir.join(CONFIG_FILE))?;
    let spec = Agent::critic_spec(&cfg)?;
    let critics = (0..cfg.num_critics())
        .map(|k| load_mlp(&dir.join(critic_file(k)), &spec))
        .collect::<Result<Vec<_>>>()?;
    let policy = load_policy(&dir.join(POLICY_FILE), &Agent::policy_spec(&cfg))?;
    Agent::from_parts(&cfg, critics, policy)
}
