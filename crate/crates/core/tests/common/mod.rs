#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use te_mdp::product::ProductMdp;
use te_mdp::solver::{HistoryWindow, PolicyTable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random product over all `(e, f)` pairs, `v = e * n_free + f`, with state 0
/// non-accepting. Accepting states loop on themselves.
pub fn random_product(rng: &mut impl Rng, n_exp: usize, n_free: usize, n_act: usize, n_acc: usize) -> ProductMdp {
    let n = n_exp * n_free;
    assert!(n_acc < n);
    let mut accepting = vec![false; n];
    let mut placed = 0;
    while placed < n_acc {
        let v = rng.random_range(1..n);
        if !accepting[v] {
            accepting[v] = true;
            placed += 1;
        }
    }
    let mut rows = Vec::with_capacity(n * n_act);
    for v in 0..n {
        for _ in 0..n_act {
            if accepting[v] {
                rows.push(vec![(v, 1.0)]);
                continue;
            }
            let p = random_simplex(rng, n);
            // Sparsify a little so zero-mass contexts show up.
            let keep: Vec<(usize, f64)> = p.into_iter().enumerate().filter(|_| rng.random::<f64>() < 0.7).collect();
            let row = if keep.is_empty() {
                vec![(rng.random_range(0..n), 1.0)]
            } else {
                let s: f64 = keep.iter().map(|(_, p)| p).sum();
                keep.into_iter().map(|(w, p)| (w, p / s)).collect()
            };
            rows.push(row);
        }
    }
    ProductMdp::from_parts(
        (0..n_act).map(|u| format!("u{u}")).collect(),
        (0..n).map(|v| format!("v{v}")).collect(),
        rows,
        accepting,
        (0..n).map(|v| v / n_free).collect(),
        (0..n).map(|v| v % n_free).collect(),
    )
    .unwrap()
}

pub fn random_policy(rng: &mut impl Rng, pm: &ProductMdp, memory: usize, horizon: usize) -> PolicyTable {
    let k = pm.n_actions();
    let win = HistoryWindow::new(k, memory);
    let tables = (0..horizon)
        .map(|t| (0..pm.n_states() * win.count(t)).flat_map(|_| random_simplex(rng, k)).collect())
        .collect();
    PolicyTable::from_tables(pm.n_states(), k, memory, tables, 1e-12).unwrap()
}

/// `μ_t(v, w)` by summing over every trajectory prefix.
pub fn enumerate_mu(pm: &ProductMdp, q: &PolicyTable) -> Vec<Vec<f64>> {
    let win = q.window();
    let horizon = q.horizon();
    let mut mu: Vec<Vec<f64>> = (0..=horizon).map(|t| vec![0.0; pm.n_states() * win.count(t)]).collect();
    fn rec(pm: &ProductMdp, q: &PolicyTable, win: HistoryWindow, t: usize, v: usize, hist: &mut Vec<usize>, p: f64, mu: &mut [Vec<f64>]) {
        let len = win.len_at(t);
        let w = hist[hist.len() - len..].iter().fold(0, |acc, &u| acc * win.n_actions + u);
        mu[t][v * win.count(t) + w] += p;
        if t == q.horizon() {
            return;
        }
        for u in 0..pm.n_actions() {
            let pu = q.row(t, v, w)[u];
            for &(v2, pv) in pm.row(v, u) {
                hist.push(u);
                rec(pm, q, win, t + 1, v2, hist, p * pu * pv, mu);
                hist.pop();
            }
        }
    }
    rec(pm, q, win, 0, pm.initial(), &mut Vec::new(), 1.0, &mut mu);
    mu
}

/// `Σ_t Σ μ q (log q/ν + c/β)` for a fixed, externally supplied `ν`.
pub fn f_fixed_nu(pm: &ProductMdp, q: &PolicyTable, nu: &[Vec<f64>], beta: f64) -> f64 {
    let mu = enumerate_mu(pm, q);
    let win = q.window();
    let k = pm.n_actions();
    let mut total = 0.0;
    for t in 0..q.horizon() {
        let wc = win.count(t);
        for v in 0..pm.n_states() {
            for w in 0..wc {
                let m = mu[t][v * wc + w];
                if m == 0.0 {
                    continue;
                }
                let prior = &nu[t][(pm.free(v) * wc + w) * k..][..k];
                for (u, &p) in q.row(t, v, w).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let c: f64 = pm.row(v, u).iter().map(|&(v2, pr)| pr * pm.cost(v, v2)).sum();
                    total += m * p * ((p / prior[u]).ln() + c / beta);
                }
            }
        }
    }
    total
}
