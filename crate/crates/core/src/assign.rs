//! Exact capacitated assignment of items to bins with pairwise and unary costs.
//!
//! This is the combinatorial core shared by the inter-device partitioner and
//! the slot floorplanner. Items are branched in index order and bins in
//! ascending order, so leaves are visited in lexicographic order of the
//! assignment vector; with `>=` pruning the first optimum found is the
//! lexicographically smallest one.

use std::time::{Duration, Instant};

use crate::resource::{Resource, ResourceVec};

/// Relative tolerance for cost comparisons.
const EPS: f64 = 1e-9;

pub(crate) fn cost_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS * a.abs().max(b.abs()).max(1.0)
}

pub(crate) fn cost_lt(a: f64, b: f64) -> bool {
    a < b && !cost_eq(a, b)
}

#[derive(Debug, Clone)]
pub struct AssignProblem {
    pub areas: Vec<ResourceVec>,
    pub limits: Vec<ResourceVec>,
    /// `unary[item][bin]`, or empty for none.
    pub unary: Vec<Vec<f64>>,
    /// (item a, item b, weight).
    pub edges: Vec<(usize, usize, f64)>,
    /// `pair_cost[bin_a][bin_b]`; an edge of weight w costs `w * pair_cost`.
    pub pair_cost: Vec<Vec<f64>>,
    /// Bin permutations that map the problem onto itself (identity excluded).
    pub automorphisms: Vec<Vec<usize>>,
    /// Items forced onto a bin.
    pub fixed: Vec<Option<usize>>,
}

/// Search budget. Node limits keep truncated searches deterministic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub time: Option<Duration>,
    pub nodes: Option<u64>,
}

impl Budget {
    pub fn time(t: Duration) -> Self {
        Budget {
            time: Some(t),
            nodes: None,
        }
    }

    pub fn nodes(n: u64) -> Self {
        Budget {
            time: None,
            nodes: Some(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignSolution {
    pub bins: Vec<usize>,
    pub cost: f64,
    /// True when the search space was exhausted (`bins` is optimal).
    pub certified: bool,
    pub nodes: u64,
    /// Best proven lower bound on the optimum.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssignOutcome {
    Solved(AssignSolution),
    /// No assignment satisfies the capacities. Carries (bin, resource) of a
    /// capacity row that cannot be met, when one is identifiable.
    Infeasible(Option<(usize, Resource)>),
    /// Time ran out before any feasible assignment was found.
    Unknown,
}

impl AssignProblem {
    pub fn n_items(&self) -> usize {
        self.areas.len()
    }

    pub fn n_bins(&self) -> usize {
        self.limits.len()
    }

    fn unary_cost(&self, item: usize, bin: usize) -> f64 {
        if self.unary.is_empty() {
            0.0
        } else {
            self.unary[item][bin]
        }
    }

    /// Objective of a complete assignment.
    pub fn cost_of(&self, bins: &[usize]) -> f64 {
        let mut c = 0.0;
        for (i, &b) in bins.iter().enumerate() {
            c += self.unary_cost(i, b);
        }
        for &(a, b, w) in &self.edges {
            c += w * self.pair_cost[bins[a]][bins[b]];
        }
        c
    }

    pub fn is_feasible(&self, bins: &[usize]) -> bool {
        self.violation(bins).is_none()
    }

    /// First violated capacity row of a complete assignment.
    pub fn violation(&self, bins: &[usize]) -> Option<(usize, Resource)> {
        let mut used = vec![ResourceVec::ZERO; self.n_bins()];
        for (i, &b) in bins.iter().enumerate() {
            used[b] += self.areas[i];
        }
        for (b, u) in used.iter().enumerate() {
            if let Some(r) = u.first_excess(&self.limits[b]) {
                return Some((b, r));
            }
        }
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(fb) = f {
                if bins[i] != *fb {
                    return Some((*fb, Resource::Lut));
                }
            }
        }
        None
    }
}

struct Search<'a> {
    p: &'a AssignProblem,
    nbrs: Vec<Vec<(usize, f64)>>,
    bins: Vec<usize>,
    used: Vec<ResourceVec>,
    /// Per unassigned item: cost of placing it on each bin given assigned neighbors.
    place_cost: Vec<Vec<f64>>,
    remaining_area: ResourceVec,
    committed: f64,
    best: Option<(Vec<usize>, f64)>,
    /// The incumbent came from the lexicographic search itself.
    best_from_search: bool,
    nodes: u64,
    deadline: Option<Instant>,
    node_limit: Option<u64>,
    timed_out: bool,
    /// For each automorphism, whether its image of the current prefix still equals the prefix.
    sym_equal: Vec<Vec<bool>>,
    accept: Option<&'a dyn Fn(&[usize]) -> bool>,
}

const UNASSIGNED: usize = usize::MAX;

impl<'a> Search<'a> {
    fn new(p: &'a AssignProblem, budget: Budget) -> Self {
        let n = p.n_items();
        let k = p.n_bins();
        let mut nbrs = vec![Vec::new(); n];
        for &(a, b, w) in &p.edges {
            if a != b {
                nbrs[a].push((b, w));
                nbrs[b].push((a, w));
            }
        }
        let place_cost = (0..n)
            .map(|i| (0..k).map(|b| p.unary_cost(i, b)).collect())
            .collect();
        Search {
            p,
            nbrs,
            bins: vec![UNASSIGNED; n],
            used: vec![ResourceVec::ZERO; k],
            place_cost,
            remaining_area: p.areas.iter().copied().sum(),
            committed: 0.0,
            best: None,
            best_from_search: false,
            nodes: 0,
            deadline: budget.time.map(|d| Instant::now() + d),
            node_limit: budget.nodes,
            timed_out: false,
            sym_equal: vec![vec![true; p.automorphisms.len()]],
            accept: None,
        }
    }

    fn allowed_bins(&self, item: usize) -> Vec<usize> {
        match self.p.fixed.get(item).copied().flatten() {
            Some(b) => vec![b],
            None => (0..self.p.n_bins()).collect(),
        }
    }

    /// Lower bound on the cost of completing the current prefix of length `depth`.
    fn bound(&self, depth: usize) -> f64 {
        let mut lb = self.committed;
        for i in depth..self.p.n_items() {
            let mut m = f64::INFINITY;
            for b in self.allowed_bins(i) {
                m = m.min(self.place_cost[i][b]);
            }
            lb += m;
        }
        lb
    }

    fn capacity_ok(&self, depth: usize) -> bool {
        let k = self.p.n_bins();
        for r in Resource::ALL {
            let room: u64 = (0..k)
                .map(|b| self.p.limits[b].get(r).saturating_sub(self.used[b].get(r)))
                .sum();
            if self.remaining_area.get(r) > room {
                return false;
            }
        }
        // Every remaining item must fit somewhere on its own.
        for i in depth..self.p.n_items() {
            let fits = self.allowed_bins(i).into_iter().any(|b| {
                (self.used[b] + self.p.areas[i]).fits_within(&self.p.limits[b])
            });
            if !fits {
                return false;
            }
        }
        true
    }

    fn assign(&mut self, item: usize, bin: usize) {
        self.bins[item] = bin;
        self.used[bin] += self.p.areas[item];
        self.remaining_area = self.remaining_area - self.p.areas[item];
        self.committed += self.place_cost[item][bin];
        for &(v, w) in &self.nbrs[item] {
            if self.bins[v] == UNASSIGNED {
                for b in 0..self.p.n_bins() {
                    self.place_cost[v][b] += w * self.p.pair_cost[bin][b];
                }
            }
        }
    }

    fn unassign(&mut self, item: usize) {
        let bin = self.bins[item];
        for &(v, w) in &self.nbrs[item] {
            if self.bins[v] == UNASSIGNED {
                for b in 0..self.p.n_bins() {
                    self.place_cost[v][b] -= w * self.p.pair_cost[bin][b];
                }
            }
        }
        self.committed -= self.place_cost[item][bin];
        self.remaining_area += self.p.areas[item];
        self.used[bin] = self.used[bin] - self.p.areas[item];
        self.bins[item] = UNASSIGNED;
    }

    fn prune(&self, lb: f64) -> bool {
        match &self.best {
            None => false,
            Some((_, best)) => {
                if self.best_from_search {
                    !cost_lt(lb, *best)
                } else {
                    cost_lt(*best, lb)
                }
            }
        }
    }

    /// Lex-leader check for the newly placed item at `depth`. Returns the
    /// updated equality flags, or `None` when some automorphism maps the
    /// prefix to a lexicographically smaller one.
    fn symmetry_step(&self, depth: usize, bin: usize) -> Option<Vec<bool>> {
        let prev = self.sym_equal.last().unwrap();
        let mut next = prev.clone();
        for (k, perm) in self.p.automorphisms.iter().enumerate() {
            if !prev[k] {
                continue;
            }
            let img = perm[bin];
            if img < bin {
                return None;
            }
            if img > bin {
                next[k] = false;
            }
        }
        let _ = depth;
        Some(next)
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if self.node_limit.is_some_and(|n| self.nodes > n) {
            self.timed_out = true;
        }
        if self.nodes & 1023 == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        let n = self.p.n_items();
        if depth == n {
            if self.accept.is_some_and(|f| !f(&self.bins)) {
                return;
            }
            let c = self.committed;
            let better = match &self.best {
                None => true,
                Some((b, best)) => {
                    cost_lt(c, *best) || (cost_eq(c, *best) && self.bins.as_slice() < b.as_slice())
                }
            };
            if better {
                self.best = Some((self.bins.clone(), c));
                self.best_from_search = true;
            } else if let Some((_, best)) = &self.best {
                if cost_eq(c, *best) {
                    self.best_from_search = true;
                }
            }
            return;
        }
        for bin in self.allowed_bins(depth) {
            let next_area = self.used[bin] + self.p.areas[depth];
            if !next_area.fits_within(&self.p.limits[bin]) {
                continue;
            }
            let sym = match self.symmetry_step(depth, bin) {
                Some(s) => s,
                None => continue,
            };
            self.assign(depth, bin);
            if self.capacity_ok(depth + 1) && !self.prune(self.bound(depth + 1)) {
                self.sym_equal.push(sym);
                self.dfs(depth + 1);
                self.sym_equal.pop();
            }
            self.unassign(depth);
            if self.timed_out {
                return;
            }
        }
    }
}

fn neighbors(p: &AssignProblem) -> Vec<Vec<(usize, f64)>> {
    let mut nbrs = vec![Vec::new(); p.n_items()];
    for &(a, b, w) in &p.edges {
        if a != b {
            nbrs[a].push((b, w));
            nbrs[b].push((a, w));
        }
    }
    nbrs
}

/// Depth-first preorder over the undirected graph, heaviest edges first,
/// restarting from the lowest unvisited item.
fn dfs_order(nbrs: &[Vec<(usize, f64)>], root: usize) -> Vec<usize> {
    let n = nbrs.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for start in std::iter::once(root).chain(0..n) {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            order.push(v);
            let mut next: Vec<(usize, f64)> = nbrs[v].iter().copied().filter(|&(u, _)| !seen[u]).collect();
            // Pushed in reverse so the heaviest, then lowest-index, pops first.
            next.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            stack.extend(next.into_iter().map(|(u, _)| u));
        }
    }
    order
}

/// Place items in `order` on the cheapest bin that still fits.
fn greedy(p: &AssignProblem, nbrs: &[Vec<(usize, f64)>], order: &[usize]) -> Option<Vec<usize>> {
    let k = p.n_bins();
    let mut bins = vec![UNASSIGNED; p.n_items()];
    let mut used = vec![ResourceVec::ZERO; k];
    for &i in order {
        let mut best: Option<(f64, usize)> = None;
        let cands: Vec<usize> = match p.fixed.get(i).copied().flatten() {
            Some(b) => vec![b],
            None => (0..k).collect(),
        };
        for b in cands {
            if !(used[b] + p.areas[i]).fits_within(&p.limits[b]) {
                continue;
            }
            let mut c = p.unary_cost(i, b);
            for &(v, w) in &nbrs[i] {
                if bins[v] != UNASSIGNED {
                    c += w * p.pair_cost[bins[v]][b];
                }
            }
            if best.is_none_or(|(bc, _)| cost_lt(c, bc)) {
                best = Some((c, b));
            }
        }
        let (_, b) = best?;
        bins[i] = b;
        used[b] += p.areas[i];
    }
    Some(bins)
}

/// Cost change of moving `i` to each bin, others fixed. Pair costs are
/// taken as symmetric.
fn move_deltas(p: &AssignProblem, nbrs: &[Vec<(usize, f64)>], bins: &[usize], i: usize) -> Vec<f64> {
    let cur = bins[i];
    (0..p.n_bins())
        .map(|b| {
            let mut d = p.unary_cost(i, b) - p.unary_cost(i, cur);
            for &(v, w) in &nbrs[i] {
                d += w * (p.pair_cost[bins[v]][b] - p.pair_cost[bins[v]][cur]);
            }
            d
        })
        .collect()
}

/// Single-item moves and pairwise swaps until no step improves the cost.
fn refine(p: &AssignProblem, nbrs: &[Vec<(usize, f64)>], bins: &mut [usize]) {
    let n = p.n_items();
    let k = p.n_bins();
    let mut used = vec![ResourceVec::ZERO; k];
    for (i, &b) in bins.iter().enumerate() {
        used[b] += p.areas[i];
    }
    let mut weight: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    for &(a, b, w) in &p.edges {
        if a != b {
            *weight.entry((a.min(b), a.max(b))).or_default() += w;
        }
    }
    let movable = |i: usize| p.fixed.get(i).copied().flatten().is_none();
    for _ in 0..50 {
        let mut improved = false;
        for i in (0..n).filter(|&i| movable(i)) {
            let cur = bins[i];
            let deltas = move_deltas(p, nbrs, bins, i);
            let mut best: Option<(f64, usize)> = None;
            for (b, &d) in deltas.iter().enumerate() {
                if b == cur || !(used[b] + p.areas[i]).fits_within(&p.limits[b]) {
                    continue;
                }
                if cost_lt(d, 0.0) && best.is_none_or(|(bd, _)| cost_lt(d, bd)) {
                    best = Some((d, b));
                }
            }
            if let Some((_, b)) = best {
                used[cur] = used[cur] - p.areas[i];
                used[b] += p.areas[i];
                bins[i] = b;
                improved = true;
            }
        }
        for i in (0..n).filter(|&i| movable(i)) {
            let bi = bins[i];
            let di = move_deltas(p, nbrs, bins, i);
            let mut best: Option<(f64, usize)> = None;
            for j in (i + 1..n).filter(|&j| movable(j) && bins[j] != bi) {
                let bj = bins[j];
                if !(used[bi] - p.areas[i] + p.areas[j]).fits_within(&p.limits[bi])
                    || !(used[bj] - p.areas[j] + p.areas[i]).fits_within(&p.limits[bj])
                {
                    continue;
                }
                let dj = move_deltas(p, nbrs, bins, j)[bi];
                // Both deltas assumed the partner stayed put.
                let fix = match weight.get(&(i, j)) {
                    Some(&w) => {
                        let pc = &p.pair_cost;
                        w * (2.0 * pc[bi][bj] - pc[bj][bj] - pc[bi][bi])
                    }
                    None => 0.0,
                };
                let d = di[bj] + dj + fix;
                if cost_lt(d, 0.0) && best.is_none_or(|(bd, _)| cost_lt(d, bd)) {
                    best = Some((d, j));
                }
            }
            if let Some((_, j)) = best {
                let bj = bins[j];
                used[bi] = used[bi] - p.areas[i] + p.areas[j];
                used[bj] = used[bj] - p.areas[j] + p.areas[i];
                bins.swap(i, j);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Best of several greedy constructions, each refined by local search.
fn heuristic(p: &AssignProblem) -> Option<Vec<usize>> {
    let n = p.n_items();
    if n == 0 {
        return Some(Vec::new());
    }
    let nbrs = neighbors(p);
    let heaviest = (0..n)
        .max_by(|&a, &b| {
            let wa: f64 = nbrs[a].iter().map(|x| x.1).sum();
            let wb: f64 = nbrs[b].iter().map(|x| x.1).sum();
            wa.total_cmp(&wb).then(b.cmp(&a))
        })
        .unwrap();
    let mut orders = vec![(0..n).collect::<Vec<_>>()];
    for root in [0, n - 1, heaviest] {
        let o = dfs_order(&nbrs, root);
        if !orders.contains(&o) {
            orders.push(o);
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for order in &orders {
        let Some(mut bins) = greedy(p, &nbrs, order) else {
            continue;
        };
        refine(p, &nbrs, &mut bins);
        let c = p.cost_of(&bins);
        let better = match &best {
            None => true,
            Some((bc, bb)) => cost_lt(c, *bc) || (cost_eq(c, *bc) && bins < *bb),
        };
        if better {
            best = Some((c, bins));
        }
    }
    best.map(|(_, b)| b)
}

/// Identify a capacity row that no assignment can satisfy.
fn capacity_witness(p: &AssignProblem) -> Option<(usize, Resource)> {
    let total: ResourceVec = p.areas.iter().copied().sum();
    for r in Resource::ALL {
        let room: u64 = p.limits.iter().map(|l| l.get(r)).sum();
        if total.get(r) > room {
            return Some((p.n_bins().saturating_sub(1), r));
        }
    }
    for a in &p.areas {
        for r in Resource::ALL {
            if p.limits.iter().all(|l| a.get(r) > l.get(r)) {
                return Some((0, r));
            }
        }
    }
    None
}

/// Solve to optimality, or until the budget runs out.
pub fn solve(p: &AssignProblem, budget: Budget) -> AssignOutcome {
    solve_inner(p, budget, None)
}

/// Like [`solve`], but complete assignments rejected by `accept` are
/// treated as infeasible.
pub fn solve_filtered(
    p: &AssignProblem,
    budget: Budget,
    accept: &dyn Fn(&[usize]) -> bool,
) -> AssignOutcome {
    solve_inner(p, budget, Some(accept))
}

fn solve_inner(
    p: &AssignProblem,
    budget: Budget,
    accept: Option<&dyn Fn(&[usize]) -> bool>,
) -> AssignOutcome {
    let n = p.n_items();
    if p.n_bins() == 0 {
        return AssignOutcome::Infeasible(None);
    }
    if n == 0 && accept.is_none_or(|f| f(&[])) {
        return AssignOutcome::Solved(AssignSolution {
            bins: vec![],
            cost: 0.0,
            certified: true,
            nodes: 0,
            lower_bound: 0.0,
        });
    }
    let mut s = Search::new(p, budget);
    s.accept = accept;
    if let Some(h) = heuristic(p) {
        if p.is_feasible(&h) && accept.is_none_or(|f| f(&h)) {
            let c = p.cost_of(&h);
            s.best = Some((h, c));
            s.best_from_search = false;
        }
    }
    let root_lb = s.bound(0);
    if s.capacity_ok(0) {
        s.dfs(0);
    }
    match s.best {
        Some((bins, cost)) => {
            let certified = !s.timed_out;
            AssignOutcome::Solved(AssignSolution {
                cost,
                certified,
                nodes: s.nodes,
                lower_bound: if certified { cost } else { root_lb.min(cost) },
                bins,
            })
        }
        None if s.timed_out => AssignOutcome::Unknown,
        None => AssignOutcome::Infeasible(capacity_witness(p)),
    }
}

/// Enumerate every assignment. Used as a test oracle.
pub fn brute_force(p: &AssignProblem) -> AssignOutcome {
    let n = p.n_items();
    let k = p.n_bins();
    let mut bins = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut count: u64 = 0;
    loop {
        count += 1;
        if p.is_feasible(&bins) {
            let c = p.cost_of(&bins);
            if best.as_ref().is_none_or(|(_, bc)| cost_lt(c, *bc)) {
                best = Some((bins.clone(), c));
            }
        }
        // Increment in lexicographic order (item 0 most significant).
        let mut i = n;
        loop {
            if i == 0 {
                return match best {
                    Some((bins, cost)) => AssignOutcome::Solved(AssignSolution {
                        bins,
                        cost,
                        certified: true,
                        nodes: count,
                        lower_bound: cost,
                    }),
                    None => AssignOutcome::Infeasible(capacity_witness(p)),
                };
            }
            i -= 1;
            bins[i] += 1;
            if bins[i] < k {
                break;
            }
            bins[i] = 0;
        }
    }
}

/// Bin permutations preserving limits, pair costs and unary costs.
/// Enumerated exhaustively, so only used for small bin counts.
pub fn find_automorphisms(p: &AssignProblem) -> Vec<Vec<usize>> {
    let k = p.n_bins();
    if k > 8 || k < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |perm| {
        if perm.iter().enumerate().all(|(i, &x)| i == x) {
            return;
        }
        for a in 0..k {
            if p.limits[a] != p.limits[perm[a]] {
                return;
            }
            for b in 0..k {
                if !cost_eq(p.pair_cost[a][b], p.pair_cost[perm[a]][perm[b]]) {
                    return;
                }
            }
        }
        if !p.unary.is_empty() {
            for row in &p.unary {
                for a in 0..k {
                    if !cost_eq(row[a], row[perm[a]]) {
                        return;
                    }
                }
            }
        }
        for (i, f) in p.fixed.iter().enumerate() {
            let _ = i;
            if let Some(b) = f {
                if perm[*b] != *b {
                    return;
                }
            }
        }
        out.push(perm.to_vec());
    });
    out
}

fn permute(perm: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == perm.len() {
        f(perm);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute(perm, i + 1, f);
        perm.swap(i, j);
    }
}
