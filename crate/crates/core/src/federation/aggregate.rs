//! Server-side aggregation rules over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::model::ParameterVector;
use crate::{Error, Result};

/// Parameters returned by one client together with its aggregation weight
/// (its local sample count).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub params: ParameterVector,
    pub weight: f64,
}

impl ClientUpdate {
    pub fn new(client: usize, params: ParameterVector, weight: f64) -> Self {
        Self { client, params, weight }
    }
}

/// Global model plus the optional server momentum buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub params: ParameterVector,
    pub momentum: Option<ParameterVector>,
    /// Completed rounds, skipped ones included.
    pub round: usize,
}

impl ServerState {
    pub fn new(params: ParameterVector) -> Self {
        Self { params, momentum: None, round: 0 }
    }

    pub fn with_momentum(params: ParameterVector) -> Self {
        let momentum = Some(ParameterVector::zeros(params.len()));
        Self { params, momentum, round: 0 }
    }
}

fn common_len<'a>(mut vectors: impl Iterator<Item = &'a [f64]>) -> Result<usize> {
    let first = vectors.next().ok_or_else(|| Error::Aggregation("no client updates to aggregate".into()))?;
    let len = first.len();
    if vectors.any(|v| v.len() != len) {
        return Err(Error::Aggregation("client updates have different lengths".into()));
    }
    Ok(len)
}

/// Sample-weighted average `sum_k (w_k / sum_j w_j) * theta_k`.
///
/// Weights are summed in sorted order and each coordinate's terms are summed
/// in sorted order, so the result does not depend on the order of
/// `updates`. Each coordinate is clamped to the inputs' `[min, max]`, which
/// the exact weighted mean never leaves; identical inputs come back exactly.
pub fn aggregate_fedavg(updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let len = common_len(updates.iter().map(|u| &u.params[..]))?;
    if let Some(bad) = updates.iter().find(|u| !(u.weight > 0.0 && u.weight.is_finite())) {
        return Err(Error::Aggregation(format!("client {} has non-positive weight {}", bad.client, bad.weight)));
    }
    let mut weights: Vec<f64> = updates.iter().map(|u| u.weight).collect();
    weights.sort_by(f64::total_cmp);
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = updates.iter().map(|u| u.weight / total).collect();

    let mut out = Vec::with_capacity(len);
    let mut terms = Vec::with_capacity(updates.len());
    for i in 0..len {
        terms.clear();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (u, &share) in updates.iter().zip(&shares) {
            let v = u.params[i];
            lo = lo.min(v);
            hi = hi.max(v);
            terms.push(share * v);
        }
        terms.sort_by(f64::total_cmp);
        out.push(terms.iter().sum::<f64>().clamp(lo, hi));
    }
    Ok(out.into())
}

/// Coordinate-wise median; an even count takes the midpoint of the two
/// middle values.
pub fn aggregate_fedmedian(updates: &[&[f64]]) -> Result<ParameterVector> {
    let len = common_len(updates.iter().copied())?;
    let mut column = Vec::with_capacity(updates.len());
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        column.clear();
        column.extend(updates.iter().map(|u| u[i]));
        column.sort_by(f64::total_cmp);
        let mid = column.len() / 2;
        out.push(if column.len() % 2 == 1 { column[mid] } else { (column[mid - 1] + column[mid]) / 2.0 });
    }
    Ok(out.into())
}

/// Server momentum step on the pseudo-gradient
/// `g = theta - aggregate_fedavg(updates)`:
/// `v' = beta * v + (1 - beta) * g`, `theta' = theta - eta * v'`.
pub fn server_fedopt_step(
    state: &ServerState,
    updates: &[ClientUpdate],
    learning_rate: f64,
    beta: f64,
) -> Result<ServerState> {
    let averaged = aggregate_fedavg(updates)?;
    if averaged.len() != state.params.len() {
        return Err(Error::Aggregation(format!(
            "updates have {} parameters, server has {}",
            averaged.len(),
            state.params.len()
        )));
    }
    let momentum = state.momentum.clone().unwrap_or_else(|| ParameterVector::zeros(state.params.len()));
    let mut v = Vec::with_capacity(momentum.len());
    let mut params = Vec::with_capacity(momentum.len());
    for i in 0..state.params.len() {
        let g = state.params[i] - averaged[i];
        let vi = beta * momentum[i] + (1.0 - beta) * g;
        v.push(vi);
        params.push(state.params[i] - learning_rate * vi);
    }
    Ok(ServerState { params: params.into(), momentum: Some(v.into()), round: state.round })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn upd(params: Vec<f64>, weight: f64) -> ClientUpdate {
        ClientUpdate::new(0, params.into(), weight)
    }

    #[test]
    fn weighted_average_by_hand() {
        let out = aggregate_fedavg(&[upd(vec![1.0, 3.0], 1.0), upd(vec![5.0, 7.0], 3.0)]).unwrap();
        assert_eq!(&*out, &[4.0, 6.0]);
        let mean = aggregate_fedavg(&[upd(vec![0.0, 0.0], 2.0), upd(vec![2.0, 4.0], 2.0)]).unwrap();
        assert_eq!(&*mean, &[1.0, 2.0]);
    }

    #[test]
    fn identical_updates_are_a_fixed_point() {
        let theta = vec![0.1, -0.7, 1.0 / 3.0, 1e-300];
        let ups: Vec<_> = [3.0, 7.0, 11.0].iter().map(|&w| upd(theta.clone(), w)).collect();
        assert_eq!(&*aggregate_fedavg(&ups).unwrap(), theta.as_slice());
        let refs: Vec<&[f64]> = ups.iter().map(|u| &u.params[..]).collect();
        assert_eq!(&*aggregate_fedmedian(&refs).unwrap(), theta.as_slice());
    }

    #[test]
    fn empty_and_ragged_inputs_fail() {
        assert!(matches!(aggregate_fedavg(&[]), Err(Error::Aggregation(_))));
        assert!(matches!(aggregate_fedmedian(&[]), Err(Error::Aggregation(_))));
        assert!(aggregate_fedavg(&[upd(vec![1.0], 1.0), upd(vec![1.0, 2.0], 1.0)]).is_err());
        assert!(aggregate_fedavg(&[upd(vec![1.0], 0.0)]).is_err());
    }

    #[test]
    fn median_by_hand() {
        let a = [1.0, 10.0];
        let b = [2.0, 20.0];
        let c = [100.0, -5.0];
        assert_eq!(&*aggregate_fedmedian(&[&a, &b, &c]).unwrap(), &[2.0, 10.0]);
        assert_eq!(&*aggregate_fedmedian(&[&[0.0, 0.0], &[4.0, 8.0]]).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn fedopt_without_momentum_is_fedavg() {
        let state = ServerState::with_momentum(vec![0.3, -0.2, 0.9].into());
        let ups = [upd(vec![0.1, 0.0, 1.0], 2.0), upd(vec![0.5, -0.4, 0.7], 5.0)];
        let next = server_fedopt_step(&state, &ups, 1.0, 0.0).unwrap();
        let avg = aggregate_fedavg(&ups).unwrap();
        for i in 0..3 {
            assert!((next.params[i] - avg[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn fedopt_zero_pseudo_gradient_keeps_params() {
        let theta = vec![0.3, -0.2];
        let state = ServerState::with_momentum(theta.clone().into());
        let next = server_fedopt_step(&state, &[upd(theta.clone(), 4.0)], 0.5, 0.9).unwrap();
        assert_eq!(&*next.params, theta.as_slice());
    }

    #[test]
    fn fedopt_momentum_unrolls() {
        // Constant g: v1 = (1 - b) g, v2 = b (1 - b) g + (1 - b) g = 0.19 g at b = 0.9.
        // Clients always land at theta - g, so each round sees the same g.
        let g = [0.5, -1.0];
        let mut state = ServerState::with_momentum(vec![2.0, 3.0].into());
        for _ in 0..2 {
            let target: Vec<f64> = state.params.iter().zip(&g).map(|(p, g)| p - g).collect();
            state = server_fedopt_step(&state, &[upd(target, 1.0)], 0.1, 0.9).unwrap();
        }
        let v = state.momentum.unwrap();
        for i in 0..2 {
            assert!((v[i] - 0.19 * g[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fedavg_envelope_permutation_and_scale(
            rows in prop::collection::vec((prop::collection::vec(-10.0f64..10.0, 4), 0.1f64..50.0), 1..8),
            scale in 0.01f64..100.0,
            rotate in 0usize..8,
        ) {
            let ups: Vec<ClientUpdate> = rows.iter().map(|(p, w)| upd(p.clone(), *w)).collect();
            let avg = aggregate_fedavg(&ups).unwrap();
            for i in 0..4 {
                let lo = ups.iter().map(|u| u.params[i]).fold(f64::INFINITY, f64::min);
                let hi = ups.iter().map(|u| u.params[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= avg[i] && avg[i] <= hi);
            }
            let mut rotated = ups.clone();
            rotated.rotate_left(rotate % ups.len());
            rotated.reverse();
            prop_assert_eq!(&aggregate_fedavg(&rotated).unwrap(), &avg);

            let scaled: Vec<ClientUpdate> = ups.iter().map(|u| upd(u.params.to_vec(), u.weight * scale)).collect();
            let s = aggregate_fedavg(&scaled).unwrap();
            for i in 0..4 {
                prop_assert!((s[i] - avg[i]).abs() < 1e-12);
            }

            let refs: Vec<&[f64]> = ups.iter().map(|u| &u.params[..]).collect();
            let mut rrefs = refs.clone();
            rrefs.reverse();
            let med = aggregate_fedmedian(&refs).unwrap();
            prop_assert_eq!(&aggregate_fedmedian(&rrefs).unwrap(), &med);
            for i in 0..4 {
                let lo = refs.iter().map(|u| u[i]).fold(f64::INFINITY, f64::min);
                let hi = refs.iter().map(|u| u[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= med[i] && med[i] <= hi);
            }
        }
    }
}
