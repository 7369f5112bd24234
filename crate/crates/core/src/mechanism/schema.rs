//! JSON form of a mechanism. Axes are one-based on the wire.

use serde::{Deserialize, Serialize};

use super::{rules, stable_mechanism, BranchingMechanism, MechanismRow, Violation};
use crate::error::{CbError, Result};
use crate::levy::{Atom, LevyMeasure};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MechanismFile {
    Stable {
        #[serde(rename = "type")]
        kind: StableTag,
        sigma: f64,
        alpha: f64,
    },
    Full {
        m: usize,
        rows: Vec<RowSpec>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum StableTag {
    #[serde(rename = "stable")]
    Stable,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub levy: LevySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevySpec {
    Zero,
    FiniteAtoms { atoms: Vec<AtomSpec> },
    AxisStable { axis: usize, alpha: f64, scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub z: Vec<f64>,
    pub mass: f64,
}

impl MechanismFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the mechanism without checking admissibility; axis numbering
    /// errors are the only rejections here.
    pub fn to_unchecked(&self) -> Result<BranchingMechanism> {
        match self {
            MechanismFile::Stable { sigma, alpha, .. } => stable_mechanism(*sigma, *alpha),
            MechanismFile::Full { m, rows } => {
                let mut out = Vec::with_capacity(rows.len());
                let mut bad = Vec::new();
                for (i, row) in rows.iter().enumerate() {
                    let levy = match &row.levy {
                        LevySpec::Zero => LevyMeasure::Zero,
                        LevySpec::FiniteAtoms { atoms } => LevyMeasure::FiniteAtoms(
                            atoms
                                .iter()
                                .map(|a| Atom {
                                    z: a.z.clone(),
                                    mass: a.mass,
                                })
                                .collect(),
                        ),
                        LevySpec::AxisStable { axis, alpha, scale } => {
                            if *axis == 0 {
                                bad.push(Violation {
                                    coordinate: Some(i + 1),
                                    rule: rules::AXIS_RANGE,
                                    value: 0.0,
                                });
                                LevyMeasure::Zero
                            } else {
                                LevyMeasure::axis_stable(axis - 1, *alpha, *scale)
                            }
                        }
                    };
                    out.push(MechanismRow {
                        alpha: row.alpha.clone(),
                        beta: row.beta,
                        levy,
                    });
                }
                if !bad.is_empty() {
                    return Err(CbError::InvalidMechanism(bad));
                }
                Ok(BranchingMechanism { m: *m, rows: out })
            }
        }
    }

    pub fn to_mechanism(&self) -> Result<BranchingMechanism> {
        let mech = self.to_unchecked()?;
        mech.ensure_valid()?;
        Ok(mech)
    }
}

impl From<&BranchingMechanism> for MechanismFile {
    fn from(mech: &BranchingMechanism) -> Self {
        MechanismFile::Full {
            m: mech.m,
            rows: mech
                .rows
                .iter()
                .map(|row| RowSpec {
                    alpha: row.alpha.clone(),
                    beta: row.beta,
                    levy: match &row.levy {
                        LevyMeasure::Zero => LevySpec::Zero,
                        LevyMeasure::FiniteAtoms(atoms) => LevySpec::FiniteAtoms {
                            atoms: atoms
                                .iter()
                                .map(|a| AtomSpec {
                                    z: a.z.clone(),
                                    mass: a.mass,
                                })
                                .collect(),
                        },
                        LevyMeasure::AxisStable(s) => LevySpec::AxisStable {
                            axis: s.axis + 1,
                            alpha: s.index,
                            scale: s.scale,
                        },
                    },
                })
                .collect(),
        }
    }
}
