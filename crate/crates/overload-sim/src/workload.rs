//! Session workload model: request types, the Markov chain over them, trace
//! generation, absorption probabilities toward the final transaction, and the
//! per-queue utilities derived from those probabilities.
//!
//! States are request types (pages); an implicit absorbing `Exit` state marks
//! the end of a session. A session is a random walk from the start state to
//! `Exit`. The utility of a request type is proportional to the probability
//! that a request of that type eventually leads to a completed final
//! transaction (`confirm`).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestClass {
    Browsing,
    Transaction,
}

/// One page class a request can ask for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestType {
    /// Short code used as the key in configs, CSVs, and logs ("Br-1", "Tr-4").
    pub label: String,
    /// Human-readable page name ("Main Page", "Confirm").
    pub page: String,
    pub class: RequestClass,
    /// Mean execution time of the page's script in milliseconds.
    pub mean_exec_ms: f64,
}

impl RequestType {
    /// Mean execution time in seconds.
    pub fn mean_exec(&self) -> f64 {
        self.mean_exec_ms / 1000.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("transition row for state {row} ({label}) sums to {sum}, expected 1")]
    RowNotStochastic { row: usize, label: String, sum: f64 },
    #[error("negative transition probability {value} from state {row} ({label}) entry {col}")]
    NegativeEntry { row: usize, label: String, col: usize, value: f64 },
    #[error("explicit Exit row must be absorbing (Exit -> Exit with probability 1)")]
    ExitNotAbsorbing,
    #[error("Exit is unreachable from state {state} ({label})")]
    ExitUnreachable { state: usize, label: String },
    #[error("absorption system is singular: the chain is ill-posed")]
    SingularSystem,
    #[error("mean execution time for state {label} must be positive, got {value} ms")]
    NonPositiveExecTime { label: String, value: f64 },
    #[error("model has no states")]
    Empty,
}

/// Stationary Markov chain over request types with an implicit absorbing
/// `Exit` state.
///
/// `transitions[i][j]` for `j < n` is the probability of moving from type `i`
/// to type `j`; column `n` is the probability of exiting.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionModel {
    pub types: Vec<RequestType>,
    pub transitions: Vec<Vec<f64>>,
    pub start: usize,
}

impl SessionModel {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.types.iter().position(|t| t.label == label)
    }

    /// Index of the final transaction type (the `confirm` request): the
    /// transaction type with the highest index. `None` for browsing-only
    /// models such as the single-queue scenario workload.
    pub fn final_transaction(&self) -> Option<usize> {
        self.types
            .iter()
            .rposition(|t| t.class == RequestClass::Transaction)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.types.is_empty() {
            return Err(ModelError::Empty);
        }
        let n = self.len();
        for t in &self.types {
            if !(t.mean_exec_ms > 0.0) {
                return Err(ModelError::NonPositiveExecTime {
                    label: t.label.clone(),
                    value: t.mean_exec_ms,
                });
            }
        }
        for (i, row) in self.transitions.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p < 0.0 || !p.is_finite() {
                    return Err(ModelError::NegativeEntry {
                        row: i,
                        label: self.types[i].label.clone(),
                        col: j,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ModelError::RowNotStochastic {
                    row: i,
                    label: self.types[i].label.clone(),
                    sum,
                });
            }
        }
        // Exit must be reachable from every state: walk backward from Exit.
        let mut reaches_exit = vec![false; n];
        let mut frontier: Vec<usize> = (0..n).filter(|&i| self.transitions[i][n] > 0.0).collect();
        for &i in &frontier {
            reaches_exit[i] = true;
        }
        while let Some(j) = frontier.pop() {
            for i in 0..n {
                if !reaches_exit[i] && self.transitions[i][j] > 0.0 {
                    reaches_exit[i] = true;
                    frontier.push(i);
                }
            }
        }
        if let Some(state) = reaches_exit.iter().position(|&r| !r) {
            return Err(ModelError::ExitUnreachable {
                state,
                label: self.types[state].label.clone(),
            });
        }
        Ok(())
    }

    /// Absorption probabilities `q_i`: the probability that a request of type
    /// `i` eventually results in a final (`confirm`) transaction request.
    ///
    /// Boundary conditions: `q(Exit) = 0` and `q = 1` at the final
    /// transaction type. For models without transaction types, all `q_i = 0`.
    pub fn reach_probabilities(&self) -> Result<Vec<f64>, ModelError> {
        let n = self.len();
        let Some(success) = self.final_transaction() else {
            return Ok(vec![0.0; n]);
        };
        // Unknowns: q_i for i != success. Equations:
        //   q_i - sum_{j != success} P(i->j) q_j = P(i->success)
        let unknowns: Vec<usize> = (0..n).filter(|&i| i != success).collect();
        let m = unknowns.len();
        let mut a = vec![vec![0.0f64; m + 1]; m];
        for (r, &i) in unknowns.iter().enumerate() {
            for (c, &j) in unknowns.iter().enumerate() {
                a[r][c] = if i == j { 1.0 } else { 0.0 } - self.transitions[i][j];
            }
            a[r][m] = self.transitions[i][success];
        }
        let solution = solve_linear(&mut a).ok_or(ModelError::SingularSystem)?;
        let mut q = vec![0.0; n];
        q[success] = 1.0;
        for (r, &i) in unknowns.iter().enumerate() {
            q[i] = solution[r].clamp(0.0, 1.0);
        }
        Ok(q)
    }

    /// Expected number of visits to each type in one session.
    pub fn expected_visits(&self) -> Result<Vec<f64>, ModelError> {
        let n = self.len();
        // v_j = [j == start] + sum_i v_i P(i->j) ; solve (I - P^T) v = e_start.
        let mut a = vec![vec![0.0f64; n + 1]; n];
        for j in 0..n {
            for i in 0..n {
                a[j][i] = if i == j { 1.0 } else { 0.0 } - self.transitions[i][j];
            }
            a[j][n] = if j == self.start { 1.0 } else { 0.0 };
        }
        solve_linear(&mut a).ok_or(ModelError::SingularSystem)
    }

    /// Mean number of requests per session.
    pub fn mean_session_length(&self) -> Result<f64, ModelError> {
        Ok(self.expected_visits()?.iter().sum())
    }

    /// Walks the chain from the start state until Exit.
    pub fn sample_trace(&self, id: u64, rng: &mut impl Rng) -> SessionTrace {
        let n = self.len();
        let mut requests = vec![self.start];
        let mut state = self.start;
        loop {
            let u: f64 = rng.random();
            let row = &self.transitions[state];
            let mut acc = 0.0;
            let mut next = n; // Exit unless a transition column claims the draw
            for (j, &p) in row.iter().enumerate().take(n) {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            if next == n {
                return SessionTrace { id, requests };
            }
            requests.push(next);
            state = next;
        }
    }

    /// Generates `pool_size` traces, deterministic for a fixed seed.
    pub fn generate_trace_pool(&self, pool_size: usize, seed: u64) -> Vec<SessionTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..pool_size)
            .map(|id| self.sample_trace(id as u64, &mut rng))
            .collect()
    }
}

/// One randomly generated session description: the ordered page requests a
/// user will issue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTrace {
    pub id: u64,
    /// Type indices into the generating model, starting at the start state.
    pub requests: Vec<usize>,
}

impl SessionTrace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error(
        "priority inversion: browsing utility {browsing} >= transaction utility {transaction}"
    )]
    PriorityInversion { browsing: f64, transaction: f64 },
    #[error("scales must be positive")]
    NonPositiveScale,
}

/// Per-type queue weights: `U_i = q_i * scale(class)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub utilities: Vec<f64>,
    pub browsing_scale: f64,
    pub transaction_scale: f64,
}

impl UtilityTable {
    /// Derives utilities from absorption probabilities. Fails if the chosen
    /// scales let any browsing queue outrank a transaction queue.
    pub fn derive(
        model: &SessionModel,
        q: &[f64],
        browsing_scale: f64,
        transaction_scale: f64,
    ) -> Result<Self, UtilityError> {
        if !(browsing_scale > 0.0) || !(transaction_scale > 0.0) {
            return Err(UtilityError::NonPositiveScale);
        }
        let utilities: Vec<f64> = model
            .types
            .iter()
            .zip(q)
            .map(|(t, &qi)| match t.class {
                RequestClass::Browsing => qi * browsing_scale,
                RequestClass::Transaction => qi * transaction_scale,
            })
            .collect();
        let max_browsing = model
            .types
            .iter()
            .zip(&utilities)
            .filter(|(t, _)| t.class == RequestClass::Browsing)
            .map(|(_, &u)| u)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_transaction = model
            .types
            .iter()
            .zip(&utilities)
            .filter(|(t, _)| t.class == RequestClass::Transaction)
            .map(|(_, &u)| u)
            .fold(f64::INFINITY, f64::min);
        if max_browsing.is_finite() && min_transaction.is_finite() && max_browsing >= min_transaction
        {
            return Err(UtilityError::PriorityInversion {
                browsing: max_browsing,
                transaction: min_transaction,
            });
        }
        Ok(UtilityTable {
            utilities,
            browsing_scale,
            transaction_scale,
        })
    }
}

/// Gaussian elimination with partial pivoting on an augmented matrix
/// (n rows, n+1 columns). Returns `None` when a pivot collapses.
fn solve_linear(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .expect("finite matrix entries")
        })?;
        if a[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        for row in 0..n {
            if row != col {
                let factor = a[row][col] / a[col][col];
                if factor != 0.0 {
                    for k in col..=n {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// The default retail-site chain shipped with the e-commerce scenario.
///
/// Structure: Main -> {Browsing, Searching, Details}, Browsing ->
/// {Searching, Details}, Searching -> Details, Details -> Login, and the
/// four-stage transaction Login -> Shipping -> Payment -> Confirm where each
/// stage either advances or exits. Branch probabilities are chosen so the
/// absorption probabilities come out at
/// q = (0.027, 0.022, 0.036, 0.073, 0.73, 0.81, 0.90, 1.0), which with scales
/// (1000, 5000) yields the utilities (27, 22, 36, 73, 3650, 4050, 4500, 5000).
pub fn default_retail_model() -> SessionModel {
    use RequestClass::{Browsing, Transaction};
    let ty = |label: &str, page: &str, class: RequestClass, ms: f64| RequestType {
        label: label.to_string(),
        page: page.to_string(),
        class,
        mean_exec_ms: ms,
    };
    let types = vec![
        ty("Br-1", "Main Page", Browsing, 200.0),
        ty("Br-2", "Browsing", Browsing, 300.0),
        ty("Br-3", "Searching", Browsing, 300.0),
        ty("Br-4", "Details", Browsing, 222.0),
        ty("Tr-1", "Login", Transaction, 280.0),
        ty("Tr-2", "Shipping", Transaction, 420.0),
        ty("Tr-3", "Payment", Transaction, 500.0),
        ty("Tr-4", "Confirm", Transaction, 300.0),
    ];
    // Columns: Br-1 Br-2 Br-3 Br-4 Tr-1 Tr-2 Tr-3 Tr-4 Exit
    let transitions = vec![
        vec![0.0, 0.5, 0.25, 7.0 / 73.0, 0.0, 0.0, 0.0, 0.0, 0.25 - 7.0 / 73.0],
        vec![0.0, 0.0, 0.25, 13.0 / 73.0, 0.0, 0.0, 0.0, 0.0, 0.75 - 13.0 / 73.0],
        vec![0.0, 0.0, 0.0, 36.0 / 73.0, 0.0, 0.0, 0.0, 0.0, 37.0 / 73.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.9],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 73.0 / 81.0, 0.0, 0.0, 8.0 / 81.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.0, 0.1],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.1],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    SessionModel {
        types,
        transitions,
        start: 0,
    }
}

/// Single-type workload for the FIFO/LIFO single-queue experiments: one
/// CPU-bound script, every "session" is exactly one request.
pub fn single_request_model(mean_exec_ms: f64) -> SessionModel {
    SessionModel {
        types: vec![RequestType {
            label: "CGI".to_string(),
            page: "CPU-intensive script".to_string(),
            class: RequestClass::Browsing,
            mean_exec_ms,
        }],
        transitions: vec![vec![0.0, 1.0]],
        start: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    #[test]
    fn default_model_is_valid() {
        let model = default_retail_model();
        assert_eq!(model.validate(), Ok(()));
        for row in &model.transitions {
            assert_close(row.iter().sum::<f64>(), 1.0, EPS);
        }
    }

    #[test]
    fn trapping_loop_is_rejected() {
        let mut model = single_request_model(200.0);
        model.transitions[0] = vec![1.0, 0.0]; // CGI -> CGI forever
        assert!(matches!(
            model.validate(),
            Err(ModelError::ExitUnreachable { state: 0, .. })
        ));
    }

    #[test]
    fn short_row_is_rejected() {
        let mut model = default_retail_model();
        model.transitions[2][8] -= 0.1; // row now sums to 0.9
        assert!(matches!(
            model.validate(),
            Err(ModelError::RowNotStochastic { row: 2, .. })
        ));
    }

    #[test]
    fn negative_entry_is_rejected() {
        let mut model = default_retail_model();
        model.transitions[1][0] = -0.2;
        model.transitions[1][8] += 0.2;
        assert!(matches!(
            model.validate(),
            Err(ModelError::NegativeEntry { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn reach_probabilities_match_known_values() {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        let expected = [0.027, 0.022, 0.036, 0.073, 0.73, 0.81, 0.90, 1.0];
        for (i, &e) in expected.iter().enumerate() {
            assert_close(q[i], e, EPS);
        }
    }

    #[test]
    fn final_transaction_boundary_is_one() {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        assert_eq!(q[model.final_transaction().unwrap()], 1.0);
    }

    #[test]
    fn utilities_reproduce_published_table() {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        let table = UtilityTable::derive(&model, &q, 1000.0, 5000.0).unwrap();
        let expected = [27.0, 22.0, 36.0, 73.0, 3650.0, 4050.0, 4500.0, 5000.0];
        for (i, &e) in expected.iter().enumerate() {
            assert_close(table.utilities[i], e, EPS);
        }
        // Strictly increasing along the transaction stages, all above browsing.
        for w in table.utilities[4..].windows(2) {
            assert!(w[0] < w[1]);
        }
        let max_browsing = table.utilities[..4].iter().cloned().fold(0.0, f64::max);
        assert!(table.utilities[4..].iter().all(|&u| u > max_browsing));
    }

    #[test]
    fn equal_scales_cause_priority_inversion() {
        let model = default_retail_model();
        let q = vec![0.5; 8];
        assert!(matches!(
            UtilityTable::derive(&model, &q, 10.0, 10.0),
            Err(UtilityError::PriorityInversion { .. })
        ));
    }

    #[test]
    fn browsing_scale_example() {
        let model = default_retail_model();
        let mut q = model.reach_probabilities().unwrap();
        q[0] = 0.027;
        let table = UtilityTable::derive(&model, &q, 1000.0, 5000.0).unwrap();
        assert_close(table.utilities[0], 27.0, EPS);
    }

    #[test]
    fn immediate_exit_traces_are_single_requests() {
        let model = single_request_model(290.0);
        let pool = model.generate_trace_pool(50, 7);
        assert!(pool.iter().all(|t| t.requests == vec![0]));
    }

    #[test]
    fn trace_pool_is_deterministic_per_seed() {
        let model = default_retail_model();
        assert_eq!(
            model.generate_trace_pool(500, 42),
            model.generate_trace_pool(500, 42)
        );
        assert_ne!(
            model.generate_trace_pool(500, 42),
            model.generate_trace_pool(500, 43)
        );
    }

    #[test]
    fn transactions_form_ordered_suffix() {
        let model = default_retail_model();
        for trace in model.generate_trace_pool(20_000, 11) {
            let first_tr = trace
                .requests
                .iter()
                .position(|&i| model.types[i].class == RequestClass::Transaction);
            if let Some(k) = first_tr {
                let suffix = &trace.requests[k..];
                // Tr-1..Tr-j in order, nothing after them but transactions.
                for (offset, &idx) in suffix.iter().enumerate() {
                    assert_eq!(idx, 4 + offset, "trace {:?}", trace.requests);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_confirm_rate_matches_linear_solve() {
        let model = default_retail_model();
        let q = model.reach_probabilities().unwrap();
        let pool = model.generate_trace_pool(100_000, 123);
        let confirm = model.final_transaction().unwrap();
        let hits = pool
            .iter()
            .filter(|t| t.requests.contains(&confirm))
            .count();
        let frac = hits as f64 / pool.len() as f64;
        assert_close(frac, q[model.start], 0.003);
        // Also within three standard errors of the solved probability.
        let se = (q[model.start] * (1.0 - q[model.start]) / pool.len() as f64).sqrt();
        assert_close(frac, q[model.start], 3.0 * se);
    }

    #[test]
    fn expected_visits_are_consistent() {
        let model = default_retail_model();
        let v = model.expected_visits().unwrap();
        assert_close(v[0], 1.0, EPS); // start visited exactly once (no cycles)
        // Expected confirms per session equal the start state's absorption
        // probability.
        let q = model.reach_probabilities().unwrap();
        assert_close(v[7], q[0], EPS);
        let mean_len = model.mean_session_length().unwrap();
        assert!(mean_len > 2.0 && mean_len < 3.0, "mean length {mean_len}");
    }

    #[test]
    fn singleton_model_reach_is_zero() {
        let model = single_request_model(290.0);
        assert_eq!(model.reach_probabilities().unwrap(), vec![0.0]);
        assert_close(model.mean_session_length().unwrap(), 1.0, EPS);
    }
}
