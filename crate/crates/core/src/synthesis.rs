//! Fixed-point synthesis of memoryless strategies for safety and
//! reach-and-stay objectives on nondeterministic finite transition systems.

use std::fmt;
use std::io::{self, Write};

use fixedbitset::FixedBitSet;

use crate::abstraction::{Abstraction, Action, LABEL_SAFE};

/// Set of abstract state ids (sink included) as a bitset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSet(FixedBitSet);

impl StateSet {
    pub fn empty(n: usize) -> Self {
        Self(FixedBitSet::with_capacity(n))
    }

    pub fn full(n: usize) -> Self {
        let mut b = FixedBitSet::with_capacity(n);
        b.insert_range(..);
        Self(b)
    }

    pub fn from_ids(n: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for id in ids {
            s.insert(id);
        }
        s
    }

    pub fn capacity(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.contains(id)
    }

    pub fn insert(&mut self, id: usize) {
        self.0.insert(id);
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut b = self.0.clone();
        b.intersect_with(&other.0);
        Self(b)
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let mut b = self.0.clone();
        b.union_with(&other.0);
        Self(b)
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Reach,
    Stay,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Reach => "reach",
            Mode::Stay => "stay",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Choice {
    pub input: usize,
    pub tau: f64,
    pub mode: Mode,
}

/// Memoryless strategy, defined exactly on the winning set.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    pub winning: StateSet,
    pub choices: Vec<Option<Choice>>,
}

impl Strategy {
    pub fn choice(&self, state: usize) -> Option<Choice> {
        self.choices.get(state).copied().flatten()
    }

    pub fn is_realizable(&self) -> bool {
        !self.winning.is_empty()
    }
}

/// Lowest-id action at `state` whose successors all lie in `target`.
fn witness<'a>(actions: &'a [Vec<Action>], state: usize, target: &StateSet) -> Option<&'a Action> {
    actions
        .get(state)?
        .iter()
        .filter(|a| !a.successors.is_empty() && a.successors.iter().all(|&s| target.contains(s)))
        .min_by_key(|a| a.input)
}

/// States of `constraint` having an input whose successors are all in
/// `target`. States without actions (such as the sink) are never included.
pub fn controlled_pre(actions: &[Vec<Action>], target: &StateSet, constraint: &StateSet) -> StateSet {
    let mut out = StateSet::empty(constraint.capacity());
    for s in constraint.iter() {
        if witness(actions, s, target).is_some() {
            out.insert(s);
        }
    }
    out
}

/// Greatest controlled invariant inside `region`, with the lowest-id input
/// that keeps each of its states inside.
pub fn max_invariant(actions: &[Vec<Action>], region: &StateSet) -> Strategy {
    let mut w = region.clone();
    loop {
        let next = controlled_pre(actions, &w, &w);
        if next == w {
            break;
        }
        w = next;
    }
    let choices = (0..w.capacity())
        .map(|s| {
            if !w.contains(s) {
                return None;
            }
            witness(actions, s, &w).map(|a| Choice { input: a.input, tau: a.tau, mode: Mode::Stay })
        })
        .collect();
    Strategy { winning: w, choices }
}

/// States that can force a visit to `goal` while staying in `safe`. Each
/// added state records the input that witnessed it in the iteration where
/// it was first added. Goal states get no choice.
pub fn reach_while_safe(actions: &[Vec<Action>], goal: &StateSet, safe: &StateSet) -> Strategy {
    let n = goal.capacity();
    let mut w = goal.clone();
    let mut choices: Vec<Option<Choice>> = vec![None; n];
    loop {
        let mut added = Vec::new();
        for s in safe.iter() {
            if w.contains(s) {
                continue;
            }
            if let Some(a) = witness(actions, s, &w) {
                added.push((s, Choice { input: a.input, tau: a.tau, mode: Mode::Reach }));
            }
        }
        if added.is_empty() {
            break;
        }
        for (s, c) in added {
            w.insert(s);
            choices[s] = Some(c);
        }
    }
    Strategy { winning: w, choices }
}

fn labelled(abs: &Abstraction, bits: u8) -> StateSet {
    StateSet::from_ids(abs.n_total(), (0..abs.n_states()).filter(|&s| abs.label(s) & bits == bits))
}

/// `□ safe`.
pub fn synthesize_safety(abs: &Abstraction) -> Strategy {
    max_invariant(&abs.actions, &labelled(abs, LABEL_SAFE))
}

/// `□ safe ∧ ◇□ target`: the controlled invariant `I` inside the safe
/// states using only target-holding actions, then reach `I` while staying
/// safe. States of `I` use the stay choice and all others the reach choice.
pub fn synthesize_reach_stay(abs: &Abstraction) -> Strategy {
    let safe = labelled(abs, LABEL_SAFE);
    let stay_actions: Vec<Vec<Action>> =
        abs.actions.iter().map(|acts| acts.iter().filter(|a| a.holds_target).cloned().collect()).collect();
    let stay = max_invariant(&stay_actions, &safe);
    let reach = reach_while_safe(&abs.actions, &stay.winning, &safe);
    let choices = (0..abs.n_total())
        .map(|s| if stay.winning.contains(s) { stay.choices[s] } else { reach.choices[s] })
        .collect();
    Strategy { winning: reach.winning, choices }
}

/// `state_id,input_id,tau,mode` for every winning state.
pub fn write_strategy_csv(strategy: &Strategy, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash: {h}")?;
    }
    writeln!(w, "state_id,input_id,tau,mode")?;
    for s in strategy.winning.iter() {
        if let Some(c) = strategy.choice(s) {
            writeln!(w, "{s},{},{:.16e},{}", c.input, c.tau, c.mode)?;
        }
    }
    Ok(())
}

/// `state_id` for every winning state.
pub fn write_winning_csv(strategy: &Strategy, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash: {h}")?;
    }
    writeln!(w, "state_id")?;
    for s in strategy.winning.iter() {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use proptest::strategy::Strategy as Gen;

    pub(crate) fn act(input: usize, successors: &[usize]) -> Action {
        Action { input, multiplier: 1, tau: 1.0, successors: successors.to_vec(), holds_target: false }
    }

    /// Random system on `n` states with up to `m` inputs; each state/input
    /// pair is disabled or has a nonempty successor set.
    pub(crate) fn arb_system(max_n: usize, max_m: usize) -> impl Gen<Value = (usize, Vec<Vec<Action>>)> {
        (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
            let pair = proptest::option::weighted(0.8, proptest::collection::btree_set(0..n, 1..=n.min(3)));
            proptest::collection::vec(proptest::collection::vec(pair, m), n).prop_map(move |table| {
                let actions = table
                    .into_iter()
                    .map(|row| {
                        row.into_iter()
                            .enumerate()
                            .filter_map(|(i, s)| s.map(|s| act(i, &s.into_iter().collect::<Vec<_>>())))
                            .collect()
                    })
                    .collect();
                (n, actions)
            })
        })
    }

    /// Every memoryless assignment of one enabled input (or none) per state.
    fn all_strategies(n: usize, actions: &[Vec<Action>]) -> Vec<Vec<Option<usize>>> {
        let mut out = vec![Vec::new()];
        for s in 0..n {
            let mut opts: Vec<Option<usize>> = vec![None];
            opts.extend((0..actions[s].len()).map(Some));
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    opts.iter().map(move |&o| {
                        let mut p = prefix.clone();
                        p.push(o);
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn succ<'a>(actions: &'a [Vec<Action>], strat: &[Option<usize>], s: usize) -> Option<&'a [usize]> {
        strat[s].map(|i| actions[s][i].successors.as_slice())
    }

    /// States from which the fixed strategy keeps every path inside `region`.
    fn stays_under(n: usize, actions: &[Vec<Action>], strat: &[Option<usize>], region: &[bool]) -> Vec<bool> {
        let mut ok: Vec<bool> = region.to_vec();
        loop {
            let next: Vec<bool> = (0..n)
                .map(|s| ok[s] && succ(actions, strat, s).is_some_and(|ss| ss.iter().all(|&t| ok[t])))
                .collect();
            if next == ok {
                return ok;
            }
            ok = next;
        }
    }

    /// States from which the fixed strategy forces `goal` within `n` steps
    /// while every state before the visit is in `safe`.
    fn forces_under(n: usize, actions: &[Vec<Action>], strat: &[Option<usize>], goal: &[bool], safe: &[bool]) -> Vec<bool> {
        let mut win = goal.to_vec();
        for _ in 0..=n {
            win = (0..n)
                .map(|s| {
                    win[s] || (safe[s] && succ(actions, strat, s).is_some_and(|ss| ss.iter().all(|&t| win[t])))
                })
                .collect();
        }
        win
    }

    fn oracle_union(
        n: usize,
        actions: &[Vec<Action>],
        f: impl Fn(&[Option<usize>]) -> Vec<bool>,
    ) -> StateSet {
        let mut out = vec![false; n];
        for strat in all_strategies(n, actions) {
            for (o, w) in out.iter_mut().zip(f(&strat)) {
                *o |= w;
            }
        }
        StateSet::from_ids(n, (0..n).filter(|&s| out[s]))
    }

    pub(crate) fn oracle_invariant(n: usize, actions: &[Vec<Action>], region: &[bool]) -> StateSet {
        oracle_union(n, actions, |st| stays_under(n, actions, st, region))
    }

    pub(crate) fn oracle_reach(n: usize, actions: &[Vec<Action>], goal: &[bool], safe: &[bool]) -> StateSet {
        oracle_union(n, actions, |st| forces_under(n, actions, st, goal, safe))
    }

    fn mask(n: usize, bits: u32) -> Vec<bool> {
        (0..n).map(|i| bits & (1 << i) != 0).collect()
    }

    fn set_of(mask: &[bool]) -> StateSet {
        StateSet::from_ids(mask.len(), (0..mask.len()).filter(|&i| mask[i]))
    }

    #[test]
    fn pre_examples() {
        // 0 -a-> {0,1}, 1 -a-> {2}, 2 -a-> {2}; 3 has no inputs.
        let actions = vec![vec![act(0, &[0, 1])], vec![act(0, &[2])], vec![act(0, &[2])], vec![]];
        let all = StateSet::full(4);
        assert_eq!(controlled_pre(&actions, &all, &all), StateSet::from_ids(4, [0, 1, 2]));
        assert!(controlled_pre(&actions, &StateSet::empty(4), &all).is_empty());
        let t = StateSet::from_ids(4, [1, 2]);
        assert_eq!(controlled_pre(&actions, &t, &all), StateSet::from_ids(4, [1, 2]));
        let t = StateSet::from_ids(4, [0, 1]);
        assert_eq!(controlled_pre(&actions, &t, &all), StateSet::from_ids(4, [0]));
    }

    #[test]
    fn invariant_and_reach_examples() {
        let loops = vec![vec![act(0, &[0])], vec![act(0, &[1])]];
        let all = StateSet::full(2);
        assert_eq!(max_invariant(&loops, &all).winning, all);
        let r = reach_while_safe(&loops, &all, &all);
        assert_eq!(r.winning, all);

        // 0 -> 1 -> 2 (goal); 3 is disconnected.
        let chain = vec![vec![act(0, &[1])], vec![act(1, &[2])], vec![act(0, &[2])], vec![act(0, &[3])]];
        let r = reach_while_safe(&chain, &StateSet::from_ids(4, [2]), &StateSet::full(4));
        assert_eq!(r.winning, StateSet::from_ids(4, [0, 1, 2]));
        assert_eq!(r.choices[1].unwrap().input, 1);
        assert_eq!(r.choices[2], None);
    }

    #[test]
    fn lowest_input_wins_ties() {
        let actions = vec![vec![act(2, &[0]), act(5, &[0])]];
        let s = max_invariant(&actions, &StateSet::full(1));
        assert_eq!(s.choices[0].unwrap().input, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn invariant_matches_oracle((n, actions) in arb_system(6, 3), bits in any::<u32>()) {
            let region = mask(n, bits);
            let s = max_invariant(&actions, &set_of(&region));
            prop_assert_eq!(&s.winning, &oracle_invariant(n, &actions, &region));
            prop_assert_eq!(controlled_pre(&actions, &s.winning, &s.winning), s.winning.clone());
            for st in s.winning.iter() {
                let c = s.choices[st].unwrap();
                let a = actions[st].iter().find(|a| a.input == c.input).unwrap();
                prop_assert!(a.successors.iter().all(|&t| s.winning.contains(t)));
            }
        }

        #[test]
        fn reach_matches_oracle((n, actions) in arb_system(6, 3), g in any::<u32>(), sf in any::<u32>()) {
            let (goal, safe) = (mask(n, g), mask(n, sf));
            let s = reach_while_safe(&actions, &set_of(&goal), &set_of(&safe));
            prop_assert_eq!(&s.winning, &oracle_reach(n, &actions, &goal, &safe));
            let again = set_of(&goal).union(&controlled_pre(&actions, &s.winning, &set_of(&safe)));
            prop_assert_eq!(again, s.winning.clone());
        }

        #[test]
        fn extra_nondeterminism_never_helps((n, actions) in arb_system(6, 3), bits in any::<u32>(), pick in any::<(usize, usize, usize)>()) {
            let region = set_of(&mask(n, bits));
            let before = max_invariant(&actions, &region).winning;
            let mut more = actions.clone();
            let s = pick.0 % n;
            if !more[s].is_empty() {
                let i = pick.1 % more[s].len();
                let t = pick.2 % n;
                if !more[s][i].successors.contains(&t) {
                    more[s][i].successors.push(t);
                    more[s][i].successors.sort_unstable();
                }
            }
            prop_assert!(max_invariant(&more, &region).winning.is_subset(&before));
        }
    }
}
