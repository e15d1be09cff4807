//! Primal network simplex for the dense transportation problem.
//!
//! The structure follows the classical spanning-tree implementation with
//! thread/successor indices and block-search pricing (as in LEMON). The
//! problem is uncapacitated, so every non-tree arc sits at its lower bound with
//! zero flow: flows are stored per tree node (for the arc joining it to its
//! parent) and no arc state array is needed.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
/// Artificial arc of node `u` has index `ART + u`.
const ART: usize = 1 << 62;
/// Dense problems at most this size are priced over every arc from the start.
const FULL_PRICING_ARCS: usize = 40_000;
/// Shortlist length per row and per column for larger problems.
const SHORTLIST: usize = 12;

pub(crate) struct SimplexSolution {
    /// `(row, column, mass)` for every arc with positive flow.
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
    /// Dual potentials with `row[i] - col[j] ≤ c_ij`, tight on the support.
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

struct Tree {
    root: usize,
    src: Vec<u32>,
    tgt: Vec<u32>,
    arc_cost: Vec<f64>,
    next_arc: usize,
    art_cost: f64,
    /// The artificial arc of `u` points `u → root` when `art_up[u]`, else
    /// `root → u`.
    art_up: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `pred_up[u]`: `u` is the source of `pred[u]`.
    pred_up: Vec<bool>,
    pred_flow: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    in_arc: usize,
    in_flow: f64,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl Tree {
    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < ART {
            self.src[e] as usize
        } else {
            let u = e - ART;
            if self.art_up[u] {
                u
            } else {
                self.root
            }
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < ART {
            self.tgt[e] as usize
        } else {
            let u = e - ART;
            if self.art_up[u] {
                self.root
            } else {
                u
            }
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < ART {
            self.arc_cost[e]
        } else if self.art_up[e - ART] {
            0.0
        } else {
            self.art_cost
        }
    }

    /// Rows are nodes `0..n`, columns `n..n + m`; `max_cost` bounds every arc
    /// cost that may ever be added.
    fn new(a: &[f64], b: &[f64], max_cost: f64) -> Self {
        let n = a.len();
        let m = b.len();
        let node_num = n + m;
        let root = node_num;
        let art_cost = (max_cost + 1.0) * (node_num as f64 + 1.0);
        let mut supply: Vec<f64> = a.to_vec();
        supply.extend(b.iter().map(|v| -v));
        let total = node_num + 1;
        let mut t = Tree {
            root,
            src: Vec::new(),
            tgt: Vec::new(),
            arc_cost: Vec::new(),
            next_arc: 0,
            art_cost,
            art_up: vec![false; node_num],
            parent: vec![NONE; total],
            pred: vec![NONE; total],
            pred_up: vec![false; total],
            pred_flow: vec![0.0; total],
            thread: vec![0; total],
            rev_thread: vec![0; total],
            succ_num: vec![0; total],
            last_succ: vec![0; total],
            pi: vec![0.0; total],
            dirty_revs: Vec::new(),
            in_arc: NONE,
            in_flow: 0.0,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0.0,
        };
        t.thread[root] = 0;
        t.rev_thread[0] = root;
        t.succ_num[root] = total;
        t.last_succ[root] = root - 1;
        for u in 0..node_num {
            t.parent[u] = root;
            t.pred[u] = ART + u;
            t.thread[u] = u + 1;
            t.rev_thread[u + 1] = u;
            t.succ_num[u] = 1;
            t.last_succ[u] = u;
            if supply[u] >= 0.0 {
                t.art_up[u] = true;
                t.pred_up[u] = true;
                t.pi[u] = 0.0;
                t.pred_flow[u] = supply[u];
            } else {
                t.art_up[u] = false;
                t.pred_up[u] = false;
                t.pi[u] = art_cost;
                t.pred_flow[u] = -supply[u];
            }
        }
        // thread closes back at the root
        t.thread[node_num - 1] = root;
        t.rev_thread[root] = node_num - 1;
        t
    }

    fn add_arc(&mut self, from: usize, to: usize, c: f64) {
        self.src.push(from as u32);
        self.tgt.push(to as u32);
        self.arc_cost.push(c);
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        self.arc_cost[e] + self.pi[self.src[e] as usize] - self.pi[self.tgt[e] as usize]
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_up[u] {
                let d = self.pred_flow[u];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if !self.pred_up[u] {
                let d = self.pred_flow[u];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        self.in_flow = val;
        if val > 0.0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                if self.pred_up[u] {
                    self.pred_flow[u] -= val;
                } else {
                    self.pred_flow[u] += val;
                }
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                if self.pred_up[u] {
                    self.pred_flow[u] += val;
                } else {
                    self.pred_flow[u] -= val;
                }
                u = self.parent[u];
            }
        }
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_arc = self.in_arc;
        let in_up = u_in == self.source(in_arc);

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_up[u_in] = in_up;
            self.pred_flow[u_in] = self.in_flow;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_up[u] = !self.pred_up[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_up[u_in] = in_up;
            self.pred_flow[u_in] = self.in_flow;
            self.succ_num[u_in] = old_succ_num;
        }

        let join = self.join;
        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let c = self.arc_cost(self.in_arc);
        let signed = if self.pred_up[self.u_in] { c } else { -c };
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - signed;
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recompute all potentials from the tree in thread (pre-)order, removing
    /// drift accumulated by incremental updates.
    fn refresh_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            let c = self.arc_cost(self.pred[u]);
            self.pi[u] = if self.pred_up[u] { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }
}

impl Tree {
    /// Pivot until no arc in the current list has negative reduced cost.
    fn run(&mut self, tol: f64, pivots: &mut usize, max_pivots: usize) -> Result<()> {
        let arc_num = self.src.len();
        if arc_num == 0 {
            return Ok(());
        }
        let block = ((arc_num as f64).sqrt().ceil() as usize).max(10).min(arc_num);
        let mut refreshes = 0usize;
        if self.next_arc >= arc_num {
            self.next_arc = 0;
        }
        loop {
            // block search for an entering arc
            let mut min = -tol;
            let mut min_arc = NONE;
            let mut cnt = block;
            let mut e = self.next_arc;
            for _ in 0..arc_num {
                let c = self.reduced_cost(e);
                if c < min {
                    min = c;
                    min_arc = e;
                }
                e += 1;
                if e == arc_num {
                    e = 0;
                }
                cnt -= 1;
                if cnt == 0 {
                    if min_arc != NONE {
                        break;
                    }
                    cnt = block;
                }
            }
            if min_arc == NONE {
                // confirm optimality against exact potentials before stopping
                self.refresh_potentials();
                refreshes += 1;
                let still = (0..arc_num).any(|e| self.reduced_cost(e) < -tol);
                if !still || refreshes > 3 {
                    return Ok(());
                }
                continue;
            }
            self.next_arc = e;
            self.in_arc = min_arc;
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::InvalidArgument("transport problem is unbounded".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::NotConverged {
                    iterations: *pivots,
                    residual: min,
                });
            }
            if *pivots % 4096 == 0 {
                self.refresh_potentials();
            }
        }
    }
}

/// Indices of the `k` smallest entries of `values` (all of them if fewer).
fn cheapest(values: impl Iterator<Item = f64>, k: usize, buf: &mut Vec<(f64, usize)>) {
    buf.clear();
    buf.extend(values.enumerate().map(|(i, v)| (v, i)));
    if buf.len() > k {
        buf.select_nth_unstable_by(k, |x, y| x.0.total_cmp(&y.0));
        buf.truncate(k);
    }
}

/// Solve `min Σ c_ij P_ij` over couplings of `a` (rows) and `b` (columns);
/// `cost` is row-major `a.len() × b.len()`.
///
/// Large problems start from a shortlist of the cheapest arcs of every row and
/// column; after each solve all arcs are priced against the potentials and the
/// violating ones are added, so the result is optimal for the full problem.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64]) -> Result<SimplexSolution> {
    solve_priced(a, b, cost, a.len() * b.len() <= FULL_PRICING_ARCS)
}

fn solve_priced(a: &[f64], b: &[f64], cost: &[f64], full: bool) -> Result<SimplexSolution> {
    let n = a.len();
    let m = b.len();
    assert_eq!(cost.len(), n * m);
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("empty measure".into()));
    }
    let arc_num = n * m;
    let max_cost = cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
    let tol = 1e-13 * (max_cost + 1.0) * ((n + m) as f64).sqrt().max(1.0);
    let max_pivots = 100 * arc_num + 1_000_000;
    let mut tree = Tree::new(a, b, max_cost);
    let mut listed = vec![false; arc_num];
    if full {
        listed.iter_mut().for_each(|l| *l = true);
    } else {
        let mut buf = Vec::new();
        for i in 0..n {
            cheapest(cost[i * m..(i + 1) * m].iter().copied(), SHORTLIST, &mut buf);
            for &(_, j) in &buf {
                listed[i * m + j] = true;
            }
        }
        for j in 0..m {
            cheapest((0..n).map(|i| cost[i * m + j]), SHORTLIST, &mut buf);
            for &(_, i) in &buf {
                listed[i * m + j] = true;
            }
        }
    }
    for (e, _) in listed.iter().enumerate().filter(|(_, &l)| l) {
        tree.add_arc(e / m, n + e % m, cost[e]);
    }
    let mut pivots = 0usize;
    loop {
        tree.run(tol, &mut pivots, max_pivots)?;
        tree.refresh_potentials();
        let mut added = false;
        let mut buf = Vec::new();
        for i in 0..n {
            // only the most violated arcs of each row, so that early rounds
            // with large artificial potentials do not flood the list
            let pi_i = tree.pi[i];
            buf.clear();
            for j in 0..m {
                let e = i * m + j;
                let rc = cost[e] + pi_i - tree.pi[n + j];
                if !listed[e] && rc < -tol {
                    buf.push((rc, j));
                }
            }
            if buf.len() > SHORTLIST {
                buf.select_nth_unstable_by(SHORTLIST, |x, y| x.0.total_cmp(&y.0));
                buf.truncate(SHORTLIST);
            }
            for &(_, j) in &buf {
                listed[i * m + j] = true;
                tree.add_arc(i, n + j, cost[i * m + j]);
                added = true;
            }
        }
        if !added {
            break;
        }
    }

    let mut flows = Vec::new();
    let mut total = 0.0;
    for u in 0..n + m {
        let e = tree.pred[u];
        if e < ART {
            let f = tree.pred_flow[u];
            if f > 0.0 {
                let (i, j) = (tree.src[e] as usize, tree.tgt[e] as usize - n);
                total += f * cost[i * m + j];
                flows.push((i, j, f));
            }
        }
    }
    flows.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let row_potential = (0..n).map(|i| -tree.pi[i]).collect();
    let col_potential = (0..m).map(|j| -tree.pi[n + j]).collect();
    Ok(SimplexSolution {
        flows,
        cost: total,
        row_potential,
        col_potential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use rand::Rng;

    /// Brute-force assignment optimum over all permutations.
    fn brute_assignment(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn matches_brute_force_assignment() {
        let mut rng = RngState::from_seed(17);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                let w = vec![1.0 / n as f64; n];
                let sol = solve(&w, &w, &cost).unwrap();
                let brute = brute_assignment(&cost, n) / n as f64;
                assert!((sol.cost - brute).abs() < 1e-12, "n={n}: {} vs {}", sol.cost, brute);
            }
        }
    }

    #[test]
    fn marginals_and_duals_on_random_instances() {
        let mut rng = RngState::from_seed(5);
        for _ in 0..30 {
            let n = rng.random_range(1..40);
            let m = rng.random_range(1..40);
            let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let cost: Vec<f64> = (0..n * m).map(|_| rng.random::<f64>()).collect();
            let sol = solve(&a, &b, &cost).unwrap();
            let mut ra = vec![0.0; n];
            let mut cb = vec![0.0; m];
            for &(i, j, f) in &sol.flows {
                ra[i] += f;
                cb[j] += f;
                assert!((sol.row_potential[i] - sol.col_potential[j] - cost[i * m + j]).abs() < 1e-9);
            }
            for i in 0..n {
                assert!((ra[i] - a[i]).abs() < 1e-9);
                for j in 0..m {
                    assert!(sol.row_potential[i] - sol.col_potential[j] <= cost[i * m + j] + 1e-9);
                }
            }
            for j in 0..m {
                assert!((cb[j] - b[j]).abs() < 1e-9);
            }
            let dual: f64 = a.iter().zip(&sol.row_potential).map(|(w, p)| w * p).sum::<f64>()
                - b.iter().zip(&sol.col_potential).map(|(w, p)| w * p).sum::<f64>();
            assert!((dual - sol.cost).abs() < 1e-9);
        }
    }

    #[test]
    fn shortlist_matches_full_pricing() {
        let mut rng = RngState::from_seed(23);
        for _ in 0..5 {
            let n = rng.random_range(40..90);
            let m = rng.random_range(40..90);
            let pts = |k: usize, rng: &mut RngState| -> Vec<(f64, f64)> {
                (0..k).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect()
            };
            let (pa, pb) = (pts(n, &mut rng), pts(m, &mut rng));
            let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.1).collect();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let mut cost = Vec::with_capacity(n * m);
            for p in &pa {
                for q in &pb {
                    cost.push(((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt());
                }
            }
            let full = solve_priced(&a, &b, &cost, true).unwrap();
            let short = solve_priced(&a, &b, &cost, false).unwrap();
            assert!((full.cost - short.cost).abs() < 1e-12, "{} vs {}", full.cost, short.cost);
        }
    }
}
