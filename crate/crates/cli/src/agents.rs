use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context};

use reachlab::episode::bridge::BridgeAgent;
use reachlab::episode::{Agent, PolicyAgent, RandomAgent, ScriptedAgent};
use reachlab::model::GuiFlow;
use reachlab::policy::{Checkpoint, LinearPolicy};

/// `golden | random | policy:<ckpt> | exec:<cmd> | tcp:<addr>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Golden,
    Random,
    Policy(PathBuf),
    Exec(String),
    Tcp(String),
}

impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match (head, rest) {
            ("golden", "") => Ok(AgentSpec::Golden),
            ("random", "") => Ok(AgentSpec::Random),
            ("policy", p) if !p.is_empty() => Ok(AgentSpec::Policy(PathBuf::from(p))),
            ("exec", c) if !c.trim().is_empty() => Ok(AgentSpec::Exec(c.to_string())),
            ("tcp", a) if !a.is_empty() => Ok(AgentSpec::Tcp(a.to_string())),
            _ => Err(format!("unknown agent spec {s:?}; expected golden, random, policy:<ckpt>, exec:<cmd> or tcp:<addr>")),
        }
    }
}

pub fn load_policy(path: &PathBuf) -> anyhow::Result<LinearPolicy> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
    Ok(LinearPolicy::from_checkpoint(ckpt)?)
}

/// Builds the agent for one episode. `flow` is the golden flow being played,
/// when there is one; `seed` seeds random agents.
pub struct AgentFactory {
    spec: AgentSpec,
    policy: Option<LinearPolicy>,
    timeout: Duration,
}

impl AgentFactory {
    pub fn new(spec: AgentSpec, timeout_secs: f64) -> anyhow::Result<Self> {
        let policy = match &spec {
            AgentSpec::Policy(p) => Some(load_policy(p)?),
            _ => None,
        };
        Ok(Self { spec, policy, timeout: Duration::from_secs_f64(timeout_secs) })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn make(&self, flow: Option<&GuiFlow>, seed: u64) -> anyhow::Result<Box<dyn Agent>> {
        Ok(match &self.spec {
            AgentSpec::Golden => match flow {
                Some(f) => Box::new(ScriptedAgent::golden(f)),
                None => bail!("the golden agent needs a gold flow"),
            },
            AgentSpec::Random => Box::new(RandomAgent::new(seed)),
            AgentSpec::Policy(_) => Box::new(PolicyAgent::new(self.policy.clone().expect("loaded in new"))),
            AgentSpec::Exec(cmd) => Box::new(
                BridgeAgent::spawn_command(cmd, self.timeout).with_context(|| format!("starting agent {cmd:?}"))?,
            ),
            AgentSpec::Tcp(addr) => Box::new(
                BridgeAgent::connect_tcp(addr.as_str(), self.timeout).with_context(|| format!("connecting to agent at {addr}"))?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("golden".parse(), Ok(AgentSpec::Golden));
        assert_eq!("random".parse(), Ok(AgentSpec::Random));
        assert_eq!("policy:ck.json".parse(), Ok(AgentSpec::Policy("ck.json".into())));
        assert_eq!("exec:python agent.py --fast".parse(), Ok(AgentSpec::Exec("python agent.py --fast".into())));
        assert_eq!("tcp:127.0.0.1:9000".parse(), Ok(AgentSpec::Tcp("127.0.0.1:9000".into())));
        assert!("policy:".parse::<AgentSpec>().is_err());
        assert!("human".parse::<AgentSpec>().is_err());
    }
}
