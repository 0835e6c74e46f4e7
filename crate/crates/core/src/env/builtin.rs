use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::machine::MealyRewardMachine;
use crate::mdp::{LabelingFunction, Nrmdp};

use super::grid::{compile, load_grid, GridSpec};
use super::hidden::HiddenEnvironment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Treasure,
    Office,
    Cube,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Treasure, Domain::Office, Domain::Cube];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Treasure => "treasure",
            Domain::Office => "office",
            Domain::Cube => "cube",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown domain {s}; expected treasure, office or cube"
                ))
            })
    }
}

/// A benchmark world: grid, hidden reward machine and run defaults.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub domain: Domain,
    pub grid_text: &'static str,
    pub machine_text: &'static str,
    pub spec: GridSpec,
    pub truth: MealyRewardMachine,
    pub expert_value: f64,
    pub episode_length: usize,
}

impl Builtin {
    pub fn compile(&self) -> Result<(Nrmdp, LabelingFunction)> {
        compile(&self.spec)
    }

    pub fn environment(&self, seed: u64) -> Result<HiddenEnvironment> {
        let (model, labels) = self.compile()?;
        HiddenEnvironment::new(
            model,
            labels,
            self.truth.clone(),
            self.spec.reset_cost,
            seed,
        )
    }
}

pub fn builtin(domain: Domain) -> Result<Builtin> {
    let (grid_text, machine_text, expert_value, episode_length) = match domain {
        Domain::Treasure => (
            include_str!("../../data/treasure.grid"),
            include_str!("../../data/treasure.json"),
            9.0,
            507,
        ),
        Domain::Office => (
            include_str!("../../data/office.grid"),
            include_str!("../../data/office.json"),
            0.3,
            63,
        ),
        Domain::Cube => (
            include_str!("../../data/cube.grid"),
            include_str!("../../data/cube.json"),
            0.15,
            75,
        ),
    };
    let spec = load_grid(grid_text)?;
    let truth = MealyRewardMachine::from_json(machine_text)?;
    Ok(Builtin {
        domain,
        grid_text,
        machine_text,
        spec,
        truth,
        expert_value,
        episode_length,
    })
}
