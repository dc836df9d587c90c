#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siv_core::env::{self, uniform_grips, EnvConfig, EnvEvent, EnvState, PushEvent};
use siv_core::experiment::{mean_steps, run_seeds, ExperimentSpec};
use siv_core::rl::{
    select_action, ActionMask, AgentConfig, Dimension, FeatureBounds, FeatureVector, SarsaAgent, SelectionStrategy,
    TilingConfig, TraceMode, Transition,
};
use siv_core::env::Variant;
use siv_core::experiment::{new_trial, play_episode, run_episode};
use siv_core::seed::episode_seed;
use siv_core::user::{PreferenceTable, SyntheticUser, UserModelConfig};
use siv_core::SivError;

/// One exact tiling over integer states `0..states`, plus the bias.
pub fn exact_coder(states: usize) -> TilingConfig {
    let levels: Vec<f64> = (0..states).map(|s| s as f64).collect();
    let bounds = FeatureBounds::new(vec![0.0, 0.0], vec![(states - 1) as f64, 1.0]).unwrap();
    TilingConfig::new(
        bounds,
        vec![Dimension::Discrete { levels }, Dimension::Discrete { levels: vec![1.0] }],
        1,
    )
    .unwrap()
}

pub fn phi(s: usize) -> FeatureVector {
    FeatureVector::new(vec![s as f64, 1.0]).unwrap()
}

/// Plain table-based SARSA(λ).
pub struct TabularSarsa {
    pub q: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    alpha: f64,
    gamma: f64,
    lambda: f64,
    accumulate: bool,
}

impl TabularSarsa {
    pub fn new(states: usize, actions: usize, cfg: &AgentConfig) -> Self {
        TabularSarsa {
            q: vec![vec![cfg.initial_value; actions]; states],
            e: vec![vec![0.0; actions]; states],
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            accumulate: cfg.trace_mode == TraceMode::Accumulating,
        }
    }

    pub fn clear_traces(&mut self) {
        for row in &mut self.e {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn update(&mut self, s: usize, a: usize, r: f64, next: Option<(usize, usize)>) {
        let target = match next {
            Some((s2, a2)) => r + self.gamma * self.q[s2][a2],
            None => r,
        };
        let delta = target - self.q[s][a];
        for row in &mut self.e {
            for x in row.iter_mut() {
                *x *= self.gamma * self.lambda;
            }
        }
        if self.accumulate {
            self.e[s][a] += 1.0;
        } else {
            self.e[s][a] = 1.0;
        }
        for (qrow, erow) in self.q.iter_mut().zip(&self.e) {
            for (q, e) in qrow.iter_mut().zip(erow) {
                *q += self.alpha * delta * e;
            }
        }
    }
}

/// Runs a tile-coded agent with one exact tiling and the tabular learner on
/// the same 6-state chain trajectories. Returns max |ΔQ| seen after any
/// episode.
pub fn tabular_equivalence(mode: TraceMode, episodes: usize) -> f64 {
    const STATES: usize = 6;
    let cfg = AgentConfig {
        lambda: 0.9,
        gamma: 0.95,
        epsilon: 0.2,
        trace_mode: mode,
        seed: 11,
        ..AgentConfig::default()
    };
    let mut agent = SarsaAgent::new(cfg.clone(), exact_coder(STATES), 2).unwrap();
    let mut oracle = TabularSarsa::new(STATES, 2, &cfg);
    let mask = ActionMask::all(2);
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        agent.begin_episode();
        oracle.clear_traces();
        let mut s = 0usize;
        let mut a = agent.select(&phi(s), &mask).unwrap();
        for _ in 0..500 {
            // Action 1 moves right, action 0 moves left; the right end is terminal.
            let s2 = if a == 1 { s + 1 } else { s.saturating_sub(1) };
            let r = if s2 == STATES - 1 { 1.0 } else { -0.1 };
            if s2 == STATES - 1 {
                agent.update(&Transition::terminal(phi(s), a, r)).unwrap();
                oracle.update(s, a, r, None);
                break;
            }
            let a2 = agent.select(&phi(s2), &mask).unwrap();
            agent
                .update(&Transition {
                    features: phi(s),
                    action: a,
                    reward: r,
                    next_features: phi(s2),
                    next_action: a2,
                    terminal: false,
                })
                .unwrap();
            oracle.update(s, a, r, Some((s2, a2)));
            s = s2;
            a = a2;
        }
        for (st, row) in oracle.q.iter().enumerate() {
            let q = agent.q_values(&phi(st)).unwrap();
            for (x, y) in q.iter().zip(row) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Deterministic 3-state chain: action 1 moves right, action 0 left (floor
/// at 0), leaving the right end terminates. Every step costs −1.
pub fn chain3_value_iteration() -> [[f64; 2]; 3] {
    let mut q = [[0.0f64; 2]; 3];
    for _ in 0..1000 {
        let v = |q: &[[f64; 2]; 3], s: usize| q[s][0].max(q[s][1]);
        let mut next = q;
        for (s, row) in next.iter_mut().enumerate() {
            row[0] = -1.0 + v(&q, s.saturating_sub(1));
            row[1] = if s == 2 { -1.0 } else { -1.0 + v(&q, s + 1) };
        }
        q = next;
    }
    q
}

/// Learns the 3-state chain with exploring starts (cycling over every
/// start pair) and greedy continuation. Returns the learned Q table and
/// whether the greedy policy from state 0 walks straight right.
pub fn chain3_learned(episodes: usize) -> ([[f64; 2]; 3], bool) {
    let cfg = AgentConfig { epsilon: 0.0, initial_value: 0.0, seed: 5, ..AgentConfig::default() };
    let mut agent = SarsaAgent::new(cfg, exact_coder(3), 2).unwrap();
    let mask = ActionMask::all(2);
    for ep in 0..episodes {
        agent.begin_episode();
        let mut s = (ep / 2) % 3;
        let mut a = ep % 2;
        for _ in 0..1000 {
            let done = s == 2 && a == 1;
            if done {
                agent.update(&Transition::terminal(phi(s), a, -1.0)).unwrap();
                break;
            }
            let s2 = if a == 1 { s + 1 } else { s.saturating_sub(1) };
            let a2 = agent.select_greedy(&phi(s2), &mask).unwrap();
            agent
                .update(&Transition {
                    features: phi(s),
                    action: a,
                    reward: -1.0,
                    next_features: phi(s2),
                    next_action: a2,
                    terminal: false,
                })
                .unwrap();
            s = s2;
            a = a2;
        }
    }
    let mut q = [[0.0; 2]; 3];
    for (s, row) in q.iter_mut().enumerate() {
        let v = agent.q_values(&phi(s)).unwrap();
        row.copy_from_slice(&v);
    }
    let shortest = (0..3).all(|s| q[s][1] > q[s][0]);
    (q, shortest)
}

/// Empirical frequencies of `draws` selections.
pub fn frequencies(q: &[f64], mask: &ActionMask, cfg: &AgentConfig, draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; q.len()];
    for _ in 0..draws {
        counts[select_action(q, mask, cfg, &mut rng).unwrap()] += 1;
    }
    counts.into_iter().map(|c| c as f64 / draws as f64).collect()
}

/// Closed-form selection probabilities over the full action space.
pub fn closed_form(q: &[f64], mask: &ActionMask, cfg: &AgentConfig) -> Vec<f64> {
    let avail: Vec<usize> = (0..q.len()).filter(|&a| mask.contains(a)).collect();
    let k = avail.len() as f64;
    let best = avail.iter().copied().max_by(|&x, &y| q[x].partial_cmp(&q[y]).unwrap()).unwrap();
    let mut p = vec![0.0; q.len()];
    match cfg.strategy {
        SelectionStrategy::EpsilonGreedy => {
            for &a in &avail {
                p[a] = cfg.epsilon / k + if a == best { 1.0 - cfg.epsilon } else { 0.0 };
            }
        }
        SelectionStrategy::EpsilonSoft => {
            for &a in &avail {
                p[a] = if a == best { 1.0 - cfg.epsilon } else { cfg.epsilon / (k - 1.0) };
            }
        }
        SelectionStrategy::Softmax => {
            let z: f64 = avail.iter().map(|&a| (q[a] / cfg.temperature).exp()).sum();
            for &a in &avail {
                p[a] = (q[a] / cfg.temperature).exp() / z;
            }
        }
    }
    p
}

/// Largest deviation between empirical and closed-form frequencies for each
/// strategy at 100 000 draws.
pub fn selection_suite() -> Vec<(SelectionStrategy, f64)> {
    let q = [0.3, -0.2, 1.1, 0.0, 0.6, -1.0];
    let mask = ActionMask::from_actions(6, [0, 1, 2, 4, 5]);
    [
        AgentConfig { strategy: SelectionStrategy::EpsilonGreedy, epsilon: 0.3, ..AgentConfig::default() },
        AgentConfig { strategy: SelectionStrategy::EpsilonSoft, epsilon: 0.3, ..AgentConfig::default() },
        AgentConfig { strategy: SelectionStrategy::Softmax, temperature: 0.5, ..AgentConfig::default() },
    ]
    .into_iter()
    .map(|cfg| {
        let emp = frequencies(&q, &mask, &cfg, 100_000, 99);
        let exact = closed_form(&q, &mask, &cfg);
        let dev = emp.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (cfg.strategy, dev)
    })
    .collect()
}

type Key = (usize, usize, usize, bool, bool);

fn key(s: &EnvState, cfg: &EnvConfig) -> Key {
    let obj = cfg.object_sizes.iter().position(|&o| o == s.object_size).unwrap();
    (s.position, s.grip, obj, s.retreat, s.terminal)
}

fn expected_mask(s: &EnvState, cfg: &EnvConfig) -> ActionMask {
    if s.retreat {
        ActionMask::from_actions(cfg.n_actions(), [cfg.backward()])
    } else if s.position == 0 {
        ActionMask::from_actions(cfg.n_actions(), (0..cfg.n_grips()).chain([cfg.forward()]))
    } else {
        ActionMask::from_actions(cfg.n_actions(), [cfg.forward(), cfg.backward()])
    }
}

#[derive(Debug, Default)]
pub struct InvariantReport {
    pub states: usize,
    pub transitions: usize,
    pub violations: Vec<String>,
}

/// Enumerates every state reachable from any reset under any action and
/// push schedule and checks masks, rewards, the grip, retreat and terminal
/// rules, and the shortest path back to success.
pub fn environment_invariants(n: usize, d: usize) -> InvariantReport {
    let cfg = EnvConfig { grip_sizes: uniform_grips(n), travel_steps: d, ..EnvConfig::default() };
    let prefs = PreferenceTable::by_size(&cfg);
    let mut report = InvariantReport::default();
    let mut seen: HashMap<Key, EnvState> = HashMap::new();
    let mut queue = VecDeque::new();
    for grip in 0..n {
        for &object_size in &cfg.object_sizes {
            let s = EnvState { position: 0, grip, object_size, retreat: false, steps: 0, terminal: false };
            seen.insert(key(&s, &cfg), s.clone());
            queue.push_back(s);
        }
    }
    let mut v = |msg: String| report.violations.push(msg);
    let mut transitions = 0;
    while let Some(s) = queue.pop_front() {
        if s.retreat && s.terminal {
            v(format!("{s:?}: retreat and terminal both set"));
        }
        if s.terminal {
            if env::available_actions(&s, &cfg).is_ok() {
                v(format!("{s:?}: terminal state offers actions"));
            }
            continue;
        }
        let mask = env::available_actions(&s, &cfg).unwrap();
        if mask.is_empty() || mask != expected_mask(&s, &cfg) {
            v(format!("{s:?}: mask {:?}", mask.iter().collect::<Vec<_>>()));
        }
        for a in 0..cfg.n_actions() {
            for push in [None, Some(PushEvent { t_ms: 0 })] {
                let out = env::step(&s, a, push, &cfg, &prefs);
                if !mask.contains(a) {
                    if !matches!(out, Err(SivError::Contract(_))) {
                        v(format!("{s:?}: unavailable action {a} accepted"));
                    }
                    continue;
                }
                let out = out.unwrap();
                transitions += 1;
                let n2 = &out.state;
                let expected_reward = if push.is_some() { cfg.push_reward } else { 0.0 };
                if out.reward != expected_reward {
                    v(format!("{s:?} a={a}: reward {}", out.reward));
                }
                if out.events.contains(&EnvEvent::PushPenalized) != push.is_some() {
                    v(format!("{s:?} a={a}: push event mismatch"));
                }
                if n2.grip != s.grip && s.position != 0 {
                    v(format!("{s:?} a={a}: grip changed in transit"));
                }
                if s.retreat && n2.position + 1 != s.position {
                    v(format!("{s:?} a={a}: retreat did not move the arm back"));
                }
                if n2.steps != s.steps + 1 {
                    v(format!("{s:?} a={a}: step counter"));
                }
                let mut norm = n2.clone();
                norm.steps = 0;
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key(&norm, &cfg)) {
                    e.insert(norm.clone());
                    queue.push_back(norm);
                }
            }
        }
    }
    report.transitions = transitions;
    report.states = seen.len();
    for s in seen.values().filter(|s| !s.terminal) {
        match shortest_to_success(s, &cfg, &prefs) {
            Some(len) if len <= 2 * d + 1 => {}
            other => report.violations.push(format!("{s:?}: success needs {other:?} steps")),
        }
    }
    report
}

fn shortest_to_success(start: &EnvState, cfg: &EnvConfig, prefs: &PreferenceTable) -> Option<usize> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    seen.insert(key(start, cfg));
    while let Some((s, dist)) = queue.pop_front() {
        if s.terminal {
            return Some(dist);
        }
        for a in env::available_actions(&s, cfg).unwrap().iter() {
            let mut n2 = env::step(&s, a, None, cfg, prefs).unwrap().state;
            n2.steps = 0;
            if seen.insert(key(&n2, cfg)) {
                queue.push_back((n2, dist + 1));
            }
        }
    }
    None
}

/// Plays random episodes with random push schedules and returns how many
/// broke the identity total reward = push magnitude × pushes.
pub fn reward_accounting(n: usize, d: usize, episodes: usize, seed: u64) -> usize {
    let cfg = EnvConfig { grip_sizes: uniform_grips(n), travel_steps: d, ..EnvConfig::default() };
    let prefs = PreferenceTable::by_size(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..episodes {
        let mut s = env::reset(&cfg, &mut rng);
        let (mut total, mut pushes) = (0.0, 0usize);
        while !s.terminal && s.steps < cfg.episode_cap {
            let mask = env::available_actions(&s, &cfg).unwrap();
            let acts: Vec<usize> = mask.iter().collect();
            let a = acts[rng.gen_range(0..acts.len())];
            let push = rng.gen_bool(0.2).then_some(PushEvent { t_ms: 0 });
            let out = env::step(&s, a, push, &cfg, &prefs).unwrap();
            total += out.reward;
            pushes += out.events.iter().filter(|e| **e == EnvEvent::PushPenalized).count();
            s = out.state;
        }
        if total != cfg.push_reward * pushes as f64 {
            bad += 1;
        }
    }
    bad
}

/// Trains the baseline agent on n = 2, D = 3 against a noiseless user, then
/// evaluates the frozen greedy policy. Returns (minimal episodes, evaluated).
pub fn convergence(master_seed: u64) -> (usize, usize) {
    let mut spec = ExperimentSpec::default();
    spec.env.grip_sizes = uniform_grips(2);
    spec.env.travel_steps = 3;
    spec.user = UserModelConfig::noiseless();
    spec.master_seed = master_seed;
    let mut trial = new_trial(&spec, Variant::Baseline).unwrap();
    let mut user = SyntheticUser::new(spec.user.clone(), spec.preference_table());
    for e in 0..50 {
        play_episode(&spec, &mut trial, &mut user, 0, e).unwrap();
    }
    trial.set_learning(false);
    let mut minimal = 0;
    for e in 50..100 {
        let seed = episode_seed(master_seed, "evaluation", 0, e);
        trial.start_episode(e, seed);
        let change = usize::from(!trial.prefs().approves(trial.state().grip, trial.state().object_size));
        user.begin_episode(seed);
        let record = run_episode(&mut trial, &mut user, 0, seed).unwrap();
        if record.steps == spec.env.travel_steps + change {
            minimal += 1;
        }
    }
    (minimal, 50)
}

/// Aggregates of the default experiment over `seeds` master seeds.
pub struct Reproduction {
    pub siv_over_no_siv: f64,
    pub baseline_over_no_siv: f64,
    pub siv_over_baseline: f64,
    /// Seeds (out of `seeds`) whose late episodes beat the early ones, per
    /// variant in [`Variant::ALL`] order.
    pub improving: [usize; 3],
    pub seeds: usize,
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn reproduction(seeds: usize) -> Reproduction {
    let spec = ExperimentSpec::default();
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let results = run_seeds(&spec, seeds, threads).unwrap();
    let pushes = |v: Variant| -> Vec<f64> {
        results.iter().map(|(_, r)| r.metrics.totals(v).unwrap().total_pushes as f64).collect()
    };
    let (b, s, n) = (pushes(Variant::Baseline), pushes(Variant::Siv), pushes(Variant::NoSiv));
    let mut improving = [0; 3];
    for (_, r) in &results {
        for (i, v) in Variant::ALL.iter().enumerate() {
            if mean_steps(&r.records, *v, 10..15) < mean_steps(&r.records, *v, 0..5) {
                improving[i] += 1;
            }
        }
    }
    let (b, s, n) = (median(b), median(s), median(n));
    Reproduction {
        siv_over_no_siv: s / n,
        baseline_over_no_siv: b / n,
        siv_over_baseline: s / b,
        improving,
        seeds,
    }
}
