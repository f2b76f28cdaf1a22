//! The generate, evaluate, route, repair loop.

use std::collections::BTreeMap;

use crate::config::{MAX_ITERATIONS_CAP, W_MAX};
use crate::encoder::build_conditions;
use crate::error::{Error, Result};
use crate::evaluator::{assess_macro, assess_objects, evaluate, AssessmentReport, ObjectStatus, DEFAULT_LAMBDA};
use crate::heads::ProjectionHeads;
use crate::refine::refine_object;
use crate::render::{render_scene, MultiviewVideo};
use crate::scene::{GlobalConditions, Scenario};
use crate::vocab::Attribute;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub gamma_g: f64,
    pub gamma_o: f64,
    pub lambda: f64,
    pub alpha_emphasis: f64,
    pub max_iterations: u32,
    pub seed: u64,
    pub feather: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            gamma_g: 0.8,
            gamma_o: 0.7,
            lambda: DEFAULT_LAMBDA,
            alpha_emphasis: 2.0,
            max_iterations: 5,
            seed: 42,
            feather: crate::config::DEFAULT_FEATHER_PX,
        }
    }
}

impl LoopConfig {
    pub fn check(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.gamma_g) {
            return Err(Error::semantic("gamma_g", format!("{} outside (0, 1)", self.gamma_g)));
        }
        if !open_unit(self.gamma_o) {
            return Err(Error::semantic("gamma_o", format!("{} outside (0, 1)", self.gamma_o)));
        }
        if !open_unit(self.lambda) {
            return Err(Error::semantic("lambda", format!("{} outside (0, 1)", self.lambda)));
        }
        if !(self.alpha_emphasis > 1.0) || !self.alpha_emphasis.is_finite() {
            return Err(Error::semantic(
                "alpha",
                format!("{} must exceed 1", self.alpha_emphasis),
            ));
        }
        if self.max_iterations == 0 || self.max_iterations > MAX_ITERATIONS_CAP {
            return Err(Error::semantic(
                "max_iterations",
                format!("{} outside 1..={MAX_ITERATIONS_CAP}", self.max_iterations),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    Pass,
    Regenerate,
    Refine,
}

impl DecisionKind {
    pub fn token(self) -> &'static str {
        match self {
            DecisionKind::Pass => "pass",
            DecisionKind::Regenerate => "regenerate",
            DecisionKind::Refine => "refine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub kind: DecisionKind,
    pub flagged_attributes: Vec<Attribute>,
    pub flagged_objects: Vec<u32>,
}

impl Decision {
    pub fn pass() -> Self {
        Self {
            kind: DecisionKind::Pass,
            flagged_attributes: Vec::new(),
            flagged_objects: Vec::new(),
        }
    }
}

/// Macro check first, then per-object thresholds. Unobservable objects are never flagged.
pub fn route(report: &AssessmentReport, config: &LoopConfig) -> Decision {
    if report.s_macro < config.gamma_g {
        let flagged: Vec<Attribute> = report
            .per_attribute_macro
            .iter()
            .filter(|(_, &s)| s < config.gamma_g)
            .map(|(a, _)| *a)
            .collect();
        if !flagged.is_empty() {
            return Decision {
                kind: DecisionKind::Regenerate,
                flagged_attributes: flagged,
                flagged_objects: Vec::new(),
            };
        }
    }
    let flagged: Vec<u32> = report
        .objects
        .iter()
        .filter(|(_, o)| o.status == ObjectStatus::Scored)
        .filter(|(_, o)| o.score.is_some_and(|s| s.s_obj < config.gamma_o))
        .map(|(i, _)| *i)
        .collect();
    if flagged.is_empty() {
        Decision::pass()
    } else {
        Decision {
            kind: DecisionKind::Refine,
            flagged_attributes: Vec::new(),
            flagged_objects: flagged,
        }
    }
}

/// Raise the weight of each flagged attribute by `alpha`, capped at `W_MAX`.
pub fn emphasize(global: &GlobalConditions, flagged: &[Attribute], alpha: f64) -> Result<GlobalConditions> {
    if flagged.is_empty() {
        return Err(Error::Contract("nothing to emphasize".into()));
    }
    let mut out = global.clone();
    for a in flagged {
        let w = out.emphasis(*a);
        out.emphasis_weights.insert(*a, (w * alpha).min(W_MAX));
    }
    Ok(out)
}

/// Same as [`emphasize`] with attributes named by token.
pub fn emphasize_named(global: &GlobalConditions, flagged: &[&str], alpha: f64) -> Result<GlobalConditions> {
    let attrs = flagged
        .iter()
        .map(|name| Attribute::parse(name).map_err(|_| Error::Contract(format!("unknown attribute {name:?}"))))
        .collect::<Result<Vec<_>>>()?;
    emphasize(global, &attrs, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopStatus {
    Passed,
    BudgetExhausted,
}

impl LoopStatus {
    pub fn token(self) -> &'static str {
        match self {
            LoopStatus::Passed => "passed",
            LoopStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u32,
    /// Weights the frames of this iteration were rendered with.
    pub emphasis_weights: BTreeMap<Attribute, f64>,
    pub report: AssessmentReport,
    pub decision: Decision,
    pub refinements: Vec<u32>,
    /// Report after refinement, with only the refined objects and the macro score recomputed.
    pub refined_report: Option<AssessmentReport>,
    /// Routing of the last report of this iteration.
    pub outcome: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLog {
    pub config: LoopConfig,
    pub iterations: Vec<IterationRecord>,
    pub status: LoopStatus,
}

impl AuditLog {
    pub fn final_report(&self) -> Option<&AssessmentReport> {
        self.iterations
            .last()
            .map(|r| r.refined_report.as_ref().unwrap_or(&r.report))
    }

    pub fn weight_history(&self, attribute: Attribute) -> Vec<f64> {
        self.iterations
            .iter()
            .map(|r| r.emphasis_weights.get(&attribute).copied().unwrap_or(1.0))
            .collect()
    }
}

/// Drive a scenario through the loop until it passes or the budget runs out.
///
/// The generator seed never changes; regeneration only changes the conditions.
pub fn run_closed_loop(
    scenario: &Scenario,
    config: &LoopConfig,
    heads: &ProjectionHeads,
) -> Result<(MultiviewVideo, AuditLog)> {
    config.check()?;
    scenario.validate()?;
    let rig = &scenario.rig;
    let mut global = scenario.global.clone();

    let render = |global: &GlobalConditions, iteration: u32| -> Result<_> {
        let mut s = scenario.clone();
        s.global = global.clone();
        let conditions = build_conditions(&s)?;
        let video = render_scene(&conditions, rig, s.num_frames, config.seed, &s.fault_plan, iteration);
        let report = evaluate(&video, &conditions, rig, config.lambda, heads)?;
        Ok((conditions, video, report))
    };

    let (mut conditions, mut video, mut report) = render(&global, 1)?;
    let mut iterations = Vec::new();
    let mut status = LoopStatus::BudgetExhausted;

    for iteration in 1..=config.max_iterations {
        let weights = global.emphasis_weights.clone();
        let decision = route(&report, config);
        match decision.kind {
            DecisionKind::Pass => {
                iterations.push(IterationRecord {
                    iteration,
                    emphasis_weights: weights,
                    report: report.clone(),
                    decision: decision.clone(),
                    refinements: Vec::new(),
                    refined_report: None,
                    outcome: decision,
                });
                status = LoopStatus::Passed;
                break;
            }
            DecisionKind::Regenerate => {
                global = emphasize(&global, &decision.flagged_attributes, config.alpha_emphasis)?;
                iterations.push(IterationRecord {
                    iteration,
                    emphasis_weights: weights,
                    report: report.clone(),
                    decision: decision.clone(),
                    refinements: Vec::new(),
                    refined_report: None,
                    outcome: decision,
                });
                if iteration < config.max_iterations {
                    (conditions, video, report) = render(&global, iteration + 1)?;
                }
            }
            DecisionKind::Refine => {
                for &index in &decision.flagged_objects {
                    let (refined, _) = refine_object(&video, &conditions, rig, index, config.feather)?;
                    video = refined;
                }
                let mut after = report.clone();
                let m = assess_macro(&video, &conditions.global);
                after.s_macro = m.s_macro;
                after.per_attribute_macro = m.per_attribute;
                let updated = assess_objects(
                    &video,
                    &conditions,
                    rig,
                    config.lambda,
                    heads,
                    Some(&decision.flagged_objects),
                )?;
                after.objects.extend(updated);
                let outcome = route(&after, config);
                let passed = outcome.kind == DecisionKind::Pass;
                iterations.push(IterationRecord {
                    iteration,
                    emphasis_weights: weights,
                    report: report.clone(),
                    decision: decision.clone(),
                    refinements: decision.flagged_objects.clone(),
                    refined_report: Some(after.clone()),
                    outcome,
                });
                report = after;
                if passed {
                    status = LoopStatus::Passed;
                    break;
                }
            }
        }
    }

    Ok((
        video,
        AuditLog {
            config: *config,
            iterations,
            status,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{ObjectReport, ObjectScore};

    fn report(s_macro: f64, weather: f64, time: f64, objects: &[(u32, Option<f64>)]) -> AssessmentReport {
        AssessmentReport {
            s_macro,
            per_attribute_macro: [(Attribute::Weather, weather), (Attribute::TimeOfDay, time)]
                .into_iter()
                .collect(),
            objects: objects
                .iter()
                .map(|&(i, s)| {
                    (
                        i,
                        ObjectReport {
                            status: if s.is_some() {
                                ObjectStatus::Scored
                            } else {
                                ObjectStatus::Unobservable
                            },
                            score: s.map(|s| ObjectScore {
                                s_obj: s,
                                semantic: s,
                                clarity: s,
                            }),
                            index_consistency: None,
                            crops: usize::from(s.is_some()),
                        },
                    )
                })
                .collect(),
            lambda: 0.6,
        }
    }

    #[test]
    fn all_above_thresholds_pass() {
        let r = report(0.95, 0.95, 0.95, &[(0, Some(0.9)), (1, Some(0.95))]);
        assert_eq!(route(&r, &LoopConfig::default()), Decision::pass());
    }

    #[test]
    fn macro_flaw_flags_low_attributes_only() {
        let r = report(0.5, 0.8, 0.2, &[(0, Some(0.1))]);
        let d = route(&r, &LoopConfig::default());
        assert_eq!(d.kind, DecisionKind::Regenerate);
        assert_eq!(d.flagged_attributes, vec![Attribute::TimeOfDay]);
    }

    #[test]
    fn low_objects_are_refined_in_order() {
        let r = report(
            0.9,
            0.9,
            0.9,
            &[(5, Some(0.2)), (0, Some(0.9)), (3, Some(0.5)), (7, None)],
        );
        let d = route(&r, &LoopConfig::default());
        assert_eq!(d.kind, DecisionKind::Refine);
        assert_eq!(d.flagged_objects, vec![3, 5]);
    }

    #[test]
    fn emphasis_caps_at_w_max() {
        let mut g = GlobalConditions::new(crate::vocab::Weather::Sunny, crate::vocab::TimeOfDay::Day);
        let once = emphasize(&g, &[Attribute::Weather], 2.0).unwrap();
        assert_eq!(once.emphasis(Attribute::Weather), 2.0);
        assert_eq!(once.emphasis(Attribute::TimeOfDay), 1.0);
        g.emphasis_weights.insert(Attribute::Weather, 6.0);
        assert_eq!(
            emphasize(&g, &[Attribute::Weather], 2.0)
                .unwrap()
                .emphasis(Attribute::Weather),
            8.0
        );
        assert!(matches!(
            emphasize_named(&g, &["lighting"], 2.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn config_bounds() {
        assert!(LoopConfig::default().check().is_ok());
        for c in [
            LoopConfig {
                max_iterations: 0,
                ..Default::default()
            },
            LoopConfig {
                max_iterations: 33,
                ..Default::default()
            },
            LoopConfig {
                gamma_g: 1.0,
                ..Default::default()
            },
            LoopConfig {
                alpha_emphasis: 1.0,
                ..Default::default()
            },
        ] {
            assert!(c.check().is_err());
        }
    }
}
