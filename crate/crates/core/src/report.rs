use serde::Serialize;

/// Parameters echoed into every report so a run can be repeated.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub n_subdomains: usize,
    pub n_overlap: usize,
    pub transmission: String,
    pub alpha: Option<f64>,
    pub c: f64,
    pub dx: f64,
    pub degree: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Outcome of an iterative solve.
///
/// `residual_history[0]` is the initial residual, so the history always has
/// `iterations + 1` entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    pub wall_time: f64,
    pub config: Option<ConfigEcho>,
}

impl SolveReport {
    pub fn initial_residual(&self) -> f64 {
        self.residual_history[0]
    }

    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap()
    }

    pub fn relative_residual(&self) -> f64 {
        let r0 = self.initial_residual();
        if r0 == 0.0 {
            0.0
        } else {
            self.final_residual() / r0
        }
    }

    /// CSV with columns `iteration,residual_2norm,relative_residual`.
    pub fn residual_csv(&self) -> String {
        let r0 = self.initial_residual();
        let mut s = String::from("iteration,residual_2norm,relative_residual\n");
        for (i, r) in self.residual_history.iter().enumerate() {
            let rel = if r0 == 0.0 { 0.0 } else { r / r0 };
            s.push_str(&format!("{i},{r:.12e},{rel:.12e}\n"));
        }
        s
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
