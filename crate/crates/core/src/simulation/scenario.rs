use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::benchmark::PETERSEN_QUALITY;
use crate::grid::{BranchId, GridModel};

pub const DEFAULT_FAULT_RESISTANCE: f64 = 100.0;
pub const DEFAULT_FAULT_TIME: f64 = 0.5;
pub const DEFAULT_POST_FAULT_DURATION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultType {
    #[serde(rename = "3ph")]
    ThreePhase,
    /// Phases A and B.
    #[serde(rename = "2ph")]
    TwoPhase,
    /// Phase A to ground, solidly grounded neutral.
    #[serde(rename = "1ph-g")]
    OnePhaseGround,
    /// Phase A to ground, Petersen-grounded neutral.
    #[serde(rename = "1ph-p")]
    OnePhasePetersen,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [
        FaultType::ThreePhase,
        FaultType::TwoPhase,
        FaultType::OnePhaseGround,
        FaultType::OnePhasePetersen,
    ];

    /// Faulted phases A, B, C.
    pub fn phases(self) -> [bool; 3] {
        match self {
            FaultType::ThreePhase => [true, true, true],
            FaultType::TwoPhase => [true, true, false],
            FaultType::OnePhaseGround | FaultType::OnePhasePetersen => [true, false, false],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FaultType::ThreePhase => "3ph",
            FaultType::TwoPhase => "2ph",
            FaultType::OnePhaseGround => "1ph-g",
            FaultType::OnePhasePetersen => "1ph-p",
        }
    }
}

impl std::fmt::Display for FaultType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FaultType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        FaultType::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fault type `{s}` (3ph|2ph|1ph-g|1ph-p)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub branch: BranchId,
    /// Fraction of the branch length from its `from` node.
    pub position: f64,
    #[serde(rename = "type")]
    pub fault_type: FaultType,
    /// Ohm.
    pub resistance: f64,
    /// Seconds.
    pub fault_time: f64,
    /// Post-fault time simulated, seconds.
    pub duration: f64,
}

impl FaultScenario {
    pub fn new(branch: BranchId, position: f64, fault_type: FaultType) -> Self {
        Self {
            branch,
            position,
            fault_type,
            resistance: DEFAULT_FAULT_RESISTANCE,
            fault_time: DEFAULT_FAULT_TIME,
            duration: DEFAULT_POST_FAULT_DURATION,
        }
    }

    pub fn with_resistance(mut self, resistance: f64) -> Self {
        self.resistance = resistance;
        self
    }

    pub fn validate(&self, grid: &GridModel) -> Result<()> {
        grid.branch(self.branch)?;
        if !(self.position > 0.0 && self.position < 1.0) {
            return Err(Error::InvalidPosition(self.position));
        }
        if !(self.resistance > 0.0 && self.resistance.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "fault resistance must be positive, got {}",
                self.resistance
            )));
        }
        if !(self.duration > 0.0) || !self.fault_time.is_finite() {
            return Err(Error::InvalidScenario(
                "fault time and duration must be finite, duration > 0".into(),
            ));
        }
        if self.fault_type == FaultType::OnePhasePetersen && !grid.has_petersen() {
            return Err(Error::InvalidScenario(
                "1ph-p fault needs a Petersen-grounded neutral".into(),
            ));
        }
        Ok(())
    }

    /// Short description such as `3ph at 50% of L4 (4-5)`.
    pub fn describe(&self, grid: &GridModel) -> String {
        let ends = grid
            .branch(self.branch)
            .map(|b| format!(" ({}-{})", b.from, b.to))
            .unwrap_or_default();
        format!(
            "{} at {}% of {}{}",
            self.fault_type,
            (self.position * 100.0).round(),
            self.branch,
            ends
        )
    }
}

/// Grounding variant matching the fault type: tuned Petersen coils for
/// 1ph-p, solid neutrals otherwise.
pub fn grid_for_fault(grid: &GridModel, fault_type: FaultType) -> Result<GridModel> {
    match (fault_type, grid.has_petersen()) {
        (FaultType::OnePhasePetersen, false) => grid
            .with_tuned_petersen(PETERSEN_QUALITY)
            .map_err(|e| Error::InvalidScenario(e.to_string())),
        (FaultType::OnePhasePetersen, true) => Ok(grid.clone()),
        (_, true) => grid.with_solid_grounding(),
        (_, false) => Ok(grid.clone()),
    }
}

/// The nine Monte Carlo scenarios of the benchmark study.
pub fn benchmark_scenarios(grid: &GridModel) -> Result<Vec<FaultScenario>> {
    use FaultType::*;
    let rows = [
        (ThreePhase, 0.50, (4, 5)),
        (OnePhaseGround, 0.50, (9, 10)),
        (OnePhasePetersen, 0.50, (9, 10)),
        (TwoPhase, 0.50, (1, 17)),
        (OnePhaseGround, 0.25, (7, 8)),
        (OnePhasePetersen, 0.25, (7, 8)),
        (TwoPhase, 0.25, (13, 14)),
        (ThreePhase, 0.75, (7, 8)),
        (TwoPhase, 0.75, (9, 10)),
    ];
    rows.into_iter()
        .map(|(t, pos, (a, b))| Ok(FaultScenario::new(super::line(grid, a, b)?, pos, t)))
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "SCENARIOS", default)]
    scenarios: Vec<ScenarioRecord>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<usize>,
    /// Alternative to `branch`: the two end nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<[usize; 2]>,
    position: f64,
    #[serde(rename = "type")]
    fault_type: FaultType,
    #[serde(default = "default_resistance")]
    resistance: f64,
    #[serde(default = "default_fault_time")]
    fault_time: f64,
    #[serde(default = "default_duration")]
    duration: f64,
}

fn default_resistance() -> f64 {
    DEFAULT_FAULT_RESISTANCE
}

fn default_fault_time() -> f64 {
    DEFAULT_FAULT_TIME
}

fn default_duration() -> f64 {
    DEFAULT_POST_FAULT_DURATION
}

/// Parses a TOML scenario list (`[[SCENARIOS]]` tables) against `grid`.
pub fn parse_scenarios(text: &str, grid: &GridModel) -> Result<Vec<FaultScenario>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        Error::InvalidScenario(match line {
            Some(l) => format!("line {l}: {}", e.message()),
            None => e.message().to_string(),
        })
    })?;
    file.scenarios
        .into_iter()
        .enumerate()
        .map(|(k, rec)| {
            let branch = match (rec.branch, rec.line) {
                (Some(b), None) => BranchId(b),
                (None, Some([a, b])) => super::line(grid, a, b)?,
                _ => {
                    return Err(Error::InvalidScenario(format!(
                        "scenario {}: give exactly one of `branch` or `line`",
                        k + 1
                    )))
                }
            };
            let s = FaultScenario {
                branch,
                position: rec.position,
                fault_type: rec.fault_type,
                resistance: rec.resistance,
                fault_time: rec.fault_time,
                duration: rec.duration,
            };
            // grounding is chosen per fault type, so check on the matching variant
            s.validate(&grid_for_fault(grid, s.fault_type)?)
                .map_err(|e| Error::InvalidScenario(format!("scenario {}: {e}", k + 1)))?;
            Ok(s)
        })
        .collect()
}

pub fn write_scenarios(scenarios: &[FaultScenario]) -> Result<String> {
    let file = ScenarioFile {
        scenarios: scenarios
            .iter()
            .map(|s| ScenarioRecord {
                branch: Some(s.branch.0),
                line: None,
                position: s.position,
                fault_type: s.fault_type,
                resistance: s.resistance,
                fault_time: s.fault_time,
                duration: s.duration,
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::InvalidScenario(e.to_string()))
}
