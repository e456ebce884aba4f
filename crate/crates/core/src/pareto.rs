//! Two-objective Pareto gradient coordination.
//!
//! Each modality branch balances the multimodal loss gradient against its
//! own unimodal loss gradient: aligned gradients are summed outright, while
//! conflicting ones (negative cosine) are replaced by the min-norm convex
//! combination, rescaled so the update keeps the magnitude of the plain sum.

use std::fmt;

use crate::autodiff::GradientMap;
use crate::modality::{Modality, PerModality};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ParetoError {
    LengthMismatch {
        left: usize,
        right: usize,
    },
    /// min-norm weights are undefined when both gradients vanish.
    BothZero,
    /// A parameter group was present in one gradient map but expected in
    /// both, or could not be routed at all.
    GroupMismatch {
        group: String,
        detail: String,
    },
}

impl fmt::Display for ParetoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParetoError::LengthMismatch { left, right } => {
                write!(f, "gradient length mismatch: {left} vs {right}")
            }
            ParetoError::BothZero => write!(f, "both gradients are zero"),
            ParetoError::GroupMismatch { group, detail } => {
                write!(f, "parameter group `{group}`: {detail}")
            }
        }
    }
}

impl std::error::Error for ParetoError {}

/// A parameter group's gradient flattened to a vector, with its norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGrad<T: Scalar> {
    pub group: String,
    pub values: Vec<T>,
    pub norm: T,
}

impl<T: Scalar> FlatGrad<T> {
    pub fn new(group: impl Into<String>, values: Vec<T>) -> Self {
        let norm = norm(&values);
        FlatGrad {
            group: group.into(),
            values,
            norm,
        }
    }

    pub fn from_tensor(group: impl Into<String>, tensor: &Tensor<T>) -> Self {
        Self::new(group, tensor.data().to_vec())
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero for degenerate (near-zero-norm) inputs.
pub fn cosine<T: Scalar>(g1: &[T], g2: &[T]) -> Result<T, ParetoError> {
    if g1.len() != g2.len() {
        return Err(ParetoError::LengthMismatch {
            left: g1.len(),
            right: g2.len(),
        });
    }
    let (n1, n2) = (norm(g1), norm(g2));
    let tiny = T::lit(DEGENERATE_NORM);
    if n1 < tiny || n2 < tiny {
        return Ok(T::zero());
    }
    Ok(dot(g1, g2) / (n1 * n2))
}

/// Closed-form weight of the multimodal gradient in the two-objective
/// min-norm problem `min ||a*gm + (1-a)*gu||^2` over `a` in `[0, 1]`:
/// `a = clamp(<gu - gm, gu> / ||gm - gu||^2, 0, 1)`, with the convention
/// `a = 0.5` when the gradients coincide.
pub fn min_norm_alpha<T: Scalar>(gm: &[T], gu: &[T]) -> Result<T, ParetoError> {
    if gm.len() != gu.len() {
        return Err(ParetoError::LengthMismatch {
            left: gm.len(),
            right: gu.len(),
        });
    }
    let tiny = T::lit(DEGENERATE_NORM);
    if norm(gm) < tiny && norm(gu) < tiny {
        return Err(ParetoError::BothZero);
    }
    let diff: Vec<T> = gm.iter().zip(gu).map(|(&m, &u)| m - u).collect();
    let denom = dot(&diff, &diff);
    if denom.sqrt() < tiny {
        return Ok(T::lit(0.5));
    }
    let num = dot(gu, gu) - dot(gm, gu);
    Ok((num / denom).max(T::zero()).min(T::one()))
}

/// Per-step record of one branch combination.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoDecision<T: Scalar> {
    pub cos_beta: T,
    pub conflict: bool,
    pub alpha_m: T,
    pub alpha_u: T,
    /// Magnitude-restoration factor; exactly 1 outside the conflict branch.
    pub lambda: T,
    /// Exact-opposition fallback fired (`d` vanished despite a conflict).
    pub degenerate: bool,
    pub combined: Vec<T>,
}

/// Combine a multimodal gradient with one unimodal gradient.
///
/// Non-conflict (`cos >= 0`): both weights 0.5, update is the doubled-weight
/// mean `gm + gu`. Conflict: min-norm weights, direction `d = 2a*gm +
/// 2(1-a)*gu`, rescaled by `lambda = ||gm + gu|| / ||d||` so the step length
/// matches the plain sum.
pub fn combine<T: Scalar>(gm: &[T], gu: &[T]) -> Result<ParetoDecision<T>, ParetoError> {
    let cos_beta = cosine(gm, gu)?;
    let half = T::lit(0.5);
    let sum: Vec<T> = gm.iter().zip(gu).map(|(&m, &u)| m + u).collect();
    if cos_beta >= T::zero() {
        return Ok(ParetoDecision {
            cos_beta,
            conflict: false,
            alpha_m: half,
            alpha_u: half,
            lambda: T::one(),
            degenerate: false,
            combined: sum,
        });
    }

    let alpha_m = min_norm_alpha(gm, gu)?;
    let alpha_u = T::one() - alpha_m;
    let two = T::lit(2.0);
    let d: Vec<T> = gm
        .iter()
        .zip(gu)
        .map(|(&m, &u)| two * alpha_m * m + two * alpha_u * u)
        .collect();
    let d_norm = norm(&d);
    if d_norm < T::lit(DEGENERATE_NORM) {
        return Ok(ParetoDecision {
            cos_beta,
            conflict: true,
            alpha_m,
            alpha_u,
            lambda: T::one(),
            degenerate: true,
            combined: sum,
        });
    }
    let lambda = norm(&sum) / d_norm;
    let combined = d.iter().map(|&v| lambda * v).collect();
    Ok(ParetoDecision {
        cos_beta,
        conflict: true,
        alpha_m,
        alpha_u,
        lambda,
        degenerate: false,
        combined,
    })
}

/// How a parameter group participates in gradient coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    /// Fusion-head parameters: multimodal gradient only.
    Fusion,
    /// A modality encoder: paired combination of multimodal and unimodal.
    Encoder(Modality),
    /// A unimodal decoder: its own unimodal gradient only.
    Decoder(Modality),
}

/// Whether conflicts are resolved or the maps are merged by plain summation.
/// Plain summation keeps the same routing, so the two modes coincide
/// whenever no conflict occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoMode {
    Coordinated,
    PlainSum,
}

/// Merge the multimodal gradient map with the three unimodal maps.
///
/// Encoder groups receive the (coordinated or plain) combination of their
/// two gradients, fusion groups pass the multimodal gradient through, and
/// decoder groups pass their own unimodal gradient through. Returns the
/// merged map plus one decision record per encoder group, in group order.
pub fn mcpareto_apply<T: Scalar>(
    multi: &GradientMap<T>,
    uni: &PerModality<GradientMap<T>>,
    classify: impl Fn(&str) -> Option<GroupKind>,
    mode: ParetoMode,
) -> Result<(GradientMap<T>, Vec<(String, ParetoDecision<T>)>), ParetoError> {
    let mut merged = GradientMap::new();
    let mut decisions = Vec::new();

    for (group, g_multi) in multi.iter() {
        match classify(group) {
            Some(GroupKind::Fusion) => merged.insert(group, g_multi.clone()),
            Some(GroupKind::Encoder(m)) => {
                let g_uni = uni
                    .get(m)
                    .get(group)
                    .ok_or_else(|| ParetoError::GroupMismatch {
                        group: group.to_string(),
                        detail: format!(
                            "present in the multimodal map but missing from the {m} unimodal map"
                        ),
                    })?;
                if g_multi.shape() != g_uni.shape() {
                    return Err(ParetoError::LengthMismatch {
                        left: g_multi.len(),
                        right: g_uni.len(),
                    });
                }
                let decision = match mode {
                    ParetoMode::Coordinated => combine(g_multi.data(), g_uni.data())?,
                    ParetoMode::PlainSum => {
                        let cos_beta = cosine(g_multi.data(), g_uni.data())?;
                        let sum = g_multi.add(g_uni).expect("shape checked");
                        ParetoDecision {
                            cos_beta,
                            conflict: cos_beta < T::zero(),
                            alpha_m: T::lit(0.5),
                            alpha_u: T::lit(0.5),
                            lambda: T::one(),
                            degenerate: false,
                            combined: sum.into_data(),
                        }
                    }
                };
                let tensor = Tensor::from_vec_allow_non_finite(
                    g_multi.shape().to_vec(),
                    decision.combined.clone(),
                )
                .expect("combined length equals group length");
                merged.insert(group, tensor);
                decisions.push((group.to_string(), decision));
            }
            Some(GroupKind::Decoder(m)) => {
                return Err(ParetoError::GroupMismatch {
                    group: group.to_string(),
                    detail: format!("classified as {m} decoder but appears in the multimodal map"),
                });
            }
            None => {
                return Err(ParetoError::GroupMismatch {
                    group: group.to_string(),
                    detail: "no routing rule for this group".to_string(),
                });
            }
        }
    }

    for (modality, map) in uni.iter() {
        for (group, g_uni) in map.iter() {
            match classify(group) {
                Some(GroupKind::Decoder(m)) if m == modality => {
                    merged.insert(group, g_uni.clone());
                }
                Some(GroupKind::Encoder(m)) if m == modality => {
                    if multi.get(group).is_none() {
                        return Err(ParetoError::GroupMismatch {
                            group: group.to_string(),
                            detail: format!(
                                "present in the {modality} unimodal map but missing from the multimodal map"
                            ),
                        });
                    }
                }
                other => {
                    return Err(ParetoError::GroupMismatch {
                        group: group.to_string(),
                        detail: format!(
                            "classified as {other:?} but appears in the {modality} unimodal map"
                        ),
                    });
                }
            }
        }
    }

    Ok((merged, decisions))
}
