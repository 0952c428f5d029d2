use chilasso::SolverConfig;
use serde::Serialize;

use crate::output::{fmt, Table};

/// Coding method compared in the experiments. The baselines are the
/// C-HiLasso problem with one of its two weights set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hilasso,
    Lasso,
    Cglasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hilasso => "c-hilasso",
            Method::Lasso => "lasso",
            Method::Cglasso => "c-glasso",
        }
    }

    pub fn config(self, base: &SolverConfig) -> SolverConfig {
        match self {
            Method::Hilasso => base.clone(),
            Method::Lasso => SolverConfig {
                lambda2_0: 0.0,
                ..base.clone()
            },
            Method::Cglasso => SolverConfig {
                lambda1: 0.0,
                ..base.clone()
            },
        }
    }

    pub fn selection(baselines: bool) -> Vec<Method> {
        if baselines {
            vec![Method::Hilasso, Method::Lasso, Method::Cglasso]
        } else {
            vec![Method::Hilasso]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodScore {
    pub method: Method,
    pub count: usize,
    pub mean_hamming: f64,
    /// Fraction of items detected without error.
    pub exact_rate: f64,
    /// Average PSNR over scored sources, when applicable.
    pub mean_psnr: Option<f64>,
}

impl MethodScore {
    /// Aggregates `(method, hamming, psnr values)` items per method, in the
    /// order of `methods`.
    pub fn collect<'a>(
        methods: &[Method],
        items: impl IntoIterator<Item = (Method, f64, Option<&'a [f64]>)>,
    ) -> Vec<MethodScore> {
        let items: Vec<_> = items.into_iter().collect();
        methods
            .iter()
            .map(|&m| {
                let mine: Vec<_> = items.iter().filter(|(k, _, _)| *k == m).collect();
                let count = mine.len();
                let denom = count.max(1) as f64;
                let psnrs: Vec<f64> = mine
                    .iter()
                    .filter_map(|(_, _, p)| *p)
                    .flat_map(|p| p.iter().copied())
                    .collect();
                MethodScore {
                    method: m,
                    count,
                    mean_hamming: mine.iter().map(|(_, h, _)| h).sum::<f64>() / denom,
                    exact_rate: mine.iter().filter(|(_, h, _)| *h == 0.0).count() as f64 / denom,
                    mean_psnr: (!psnrs.is_empty())
                        .then(|| psnrs.iter().sum::<f64>() / psnrs.len() as f64),
                }
            })
            .collect()
    }

    pub fn table(scores: &[MethodScore]) -> Table {
        let mut t = Table::new([
            "method",
            "count",
            "mean_hamming",
            "exact_rate",
            "mean_psnr_db",
        ]);
        for s in scores {
            t.push(vec![
                s.method.name().into(),
                s.count.to_string(),
                fmt(s.mean_hamming),
                fmt(s.exact_rate),
                s.mean_psnr.map(fmt).unwrap_or_default(),
            ]);
        }
        t
    }
}

pub fn score<'a>(scores: &'a [MethodScore], m: Method) -> Option<&'a MethodScore> {
    scores.iter().find(|s| s.method == m)
}
