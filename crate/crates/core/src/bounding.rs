//! Lowering passes on counter machines:
//!
//! * [`weaken`]: polynomially bounded to weakly n-bounded, storing each
//!   counter as base-(n+1) digits and keeping `n` in an auxiliary counter.
//! * [`tighten`]: weakly n-bounded to n-bounded, spreading the values over
//!   one counter per subset of the source counters.
//!
//! Gadget states are named `<src>#<gadget>#<k>`.

use thiserror::Error;

use crate::cm::{BoundClass, CounterMachine, Instruction, MachineBuilder};

pub const DEFAULT_MAX_TIGHTEN_COUNTERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundingError {
    #[error("machine `{0}` has no bound declaration")]
    MissingBoundDeclaration(String),
    #[error("machine `{name}` is declared `{bound}`, which this pass does not accept")]
    WrongBoundClass { name: String, bound: BoundClass },
    #[error("{counters} counters need {subsets} subset counters, over the cap of {cap} source counters")]
    CounterCountTooLarge { counters: usize, subsets: u64, cap: usize },
}

/// Base-(n+1) digits of `value`, least significant first.
pub fn encode_digits(value: u64, n: u32, digits: u32) -> Option<Vec<u32>> {
    let base = u64::from(n) + 1;
    let mut v = value;
    let mut out = Vec::with_capacity(digits as usize);
    for _ in 0..digits {
        out.push((v % base) as u32);
        v /= base;
    }
    (v == 0).then_some(out)
}

pub fn decode_digits(digits: &[u32], n: u32) -> u64 {
    let base = u64::from(n) + 1;
    digits.iter().rev().fold(0, |acc, &d| acc * base + u64::from(d))
}

/// Subset-counter representation of `values` with total `n`: sort the values
/// in decreasing order and give each prefix set the gap to the next value.
/// Returns `(mask, count)` pairs with nonzero counts, `mask` over counter
/// indices.
pub fn encode_subsets(values: &[u32], n: u32) -> Option<Vec<(u32, u32)>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(values[i]));
    let mut out = Vec::new();
    let mut mask = 0u32;
    for (j, &i) in order.iter().enumerate() {
        mask |= 1 << i;
        let next = order.get(j + 1).map(|&k| values[k]).unwrap_or(0);
        let gap = values[i] - next;
        if gap > 0 {
            out.push((mask, gap));
        }
    }
    let top = order.first().map(|&i| values[i]).unwrap_or(0);
    if top > n {
        return None;
    }
    if n > top {
        out.push((0, n - top));
    }
    out.sort_unstable();
    Some(out)
}

/// Represented values from subset counters given as `(mask, count)` pairs.
pub fn decode_subsets(entries: &[(u32, u32)], k: usize) -> Vec<u32> {
    (0..k).map(|x| entries.iter().filter(|&&(m, _)| m & (1 << x) != 0).map(|&(_, c)| c).sum()).collect()
}

/// Fresh-state allocator for one gadget.
struct Gadget<'b> {
    b: &'b mut MachineBuilder,
    prefix: String,
    k: usize,
}

impl<'b> Gadget<'b> {
    fn new(b: &'b mut MachineBuilder, src: &str, gadget: &str) -> Self {
        Self { b, prefix: format!("{src}#{gadget}"), k: 0 }
    }

    fn fresh(&mut self) -> usize {
        self.k += 1;
        self.b.state(format!("{}#{}", self.prefix, self.k))
    }

    fn named(&mut self, suffix: &str) -> usize {
        self.b.state(format!("{}#{suffix}", self.prefix))
    }

    fn trans(&mut self, from: usize, ins: Instruction, to: usize) {
        self.b.trans(from, ins, to);
    }

    /// Reversible instruction sequence through fresh states.
    fn seq(&mut self, from: usize, seq: &[Instruction], to: usize) {
        self.k += 1;
        let prefix = format!("{}#{}", self.prefix, self.k);
        self.b.sequence(from, seq, to, &prefix);
    }
}

/// Result of [`weaken`]: the machine plus where each source counter went.
#[derive(Clone, Debug)]
pub struct Weakened {
    pub machine: CounterMachine,
    /// Digit counters of each source counter, least significant first.
    pub digits: Vec<Vec<usize>>,
    pub zn: usize,
    pub z0: usize,
}

impl Weakened {
    pub fn num_digits(&self) -> usize {
        self.digits.first().map_or(0, Vec::len)
    }

    /// Source counter values represented by lowered values at input size `n`.
    pub fn decode(&self, values: &[u32], n: u32) -> Vec<u64> {
        self.digits.iter().map(|ds| decode_digits(&ds.iter().map(|&d| values[d]).collect::<Vec<_>>(), n)).collect()
    }
}

fn fresh_counter_name(m: &CounterMachine, base: &str) -> String {
    let mut name = base.to_string();
    while m.counters.contains(&name) {
        name.insert(0, '_');
    }
    name
}

/// Digits needed so that `n^c + slack` fits for every `n >= 1`.
fn digits_for(c: u32, slack: u32) -> u32 {
    let mut d = c;
    while (1u64 << d) - 1 < 1 + u64::from(slack) {
        d += 1;
    }
    d
}

/// Lowers a polynomially bounded machine to a weakly n-bounded one. Machines
/// declared `n` or `weak-n` are treated as degree 1.
pub fn weaken(m: &CounterMachine) -> Result<Weakened, BoundingError> {
    let c = match m.bound {
        None => return Err(BoundingError::MissingBoundDeclaration(m.name.clone())),
        Some(BoundClass::N) | Some(BoundClass::WeakN) => 1,
        Some(BoundClass::Poly(c)) => c,
    };
    let c = digits_for(c, m.slack) as usize;
    let mut b = MachineBuilder::new(format!("{}-weak", m.name));
    let digit_name = |x: usize, i: usize| format!("{}.{i}", m.counters[x]);
    let mut digits = vec![vec![0; c]; m.num_counters()];
    for (x, ds) in digits.iter_mut().enumerate().take(m.input_arity) {
        ds[0] = b.counter(digit_name(x, 0));
    }
    for (x, ds) in digits.iter_mut().enumerate() {
        let first = if x < m.input_arity { 1 } else { 0 };
        for (i, d) in ds.iter_mut().enumerate().skip(first) {
            *d = b.counter(digit_name(x, i));
        }
    }
    let zn = b.counter(fresh_counter_name(m, "zn"));
    let z0 = b.counter(fresh_counter_name(m, "z0"));
    b.set_input_arity(m.input_arity);
    for s in &m.states {
        b.state(s.clone());
    }

    // Initialization: accumulate the input size into zn, restoring inputs.
    let q0_name = &m.states[m.init];
    let init = if m.input_arity == 0 {
        m.init
    } else {
        let mut g = Gadget::new(&mut b, q0_name, "init");
        let start = g.fresh();
        let mut cur = start;
        for x in 0..m.input_arity {
            let x0 = digits[x][0];
            g.seq(cur, &[Instruction::Dec(x0), Instruction::Inc(z0), Instruction::Inc(zn)], cur);
            let restore = g.fresh();
            g.trans(cur, Instruction::Zero(x0), restore);
            g.seq(restore, &[Instruction::Dec(z0), Instruction::Inc(x0)], restore);
            let next = if x + 1 == m.input_arity { m.init } else { g.fresh() };
            g.trans(restore, Instruction::Zero(z0), next);
            cur = next;
        }
        start
    };

    for (j, t) in m.transitions.iter().enumerate() {
        let src = &m.states[t.from];
        match t.ins {
            Instruction::Nop => b.trans(t.from, Instruction::Nop, t.to),
            Instruction::Nonzero(x) => {
                for &d in &digits[x] {
                    b.trans(t.from, Instruction::Nonzero(d), t.to);
                }
            }
            Instruction::Zero(x) => {
                let mut g = Gadget::new(&mut b, src, &format!("zero{j}"));
                let mut cur = t.from;
                for (i, &d) in digits[x].iter().enumerate() {
                    let next = if i + 1 == c { t.to } else { g.fresh() };
                    g.trans(cur, Instruction::Zero(d), next);
                    if next != t.to {
                        g.trans(next, Instruction::Nop, t.from);
                    }
                    cur = next;
                }
            }
            Instruction::Inc(x) => {
                let mut g = Gadget::new(&mut b, src, &format!("inc{j}"));
                let start = g.fresh();
                g.trans(t.from, Instruction::Nop, start);
                let mut cur = start;
                for (i, &d) in digits[x].iter().enumerate() {
                    let (yes, no) = is_n(&mut g, cur, d, zn, z0);
                    g.trans(no, Instruction::Inc(d), t.to);
                    if i + 1 == c {
                        let overflow = g.named("overflow");
                        g.trans(yes, Instruction::Nop, overflow);
                    } else {
                        cur = set_zero(&mut g, yes, d);
                    }
                }
            }
            Instruction::Dec(x) => {
                let mut g = Gadget::new(&mut b, src, &format!("dec{j}"));
                let gate = g.fresh();
                for &d in &digits[x] {
                    g.trans(t.from, Instruction::Nonzero(d), gate);
                }
                let mut cur = gate;
                for (i, &d) in digits[x].iter().enumerate() {
                    g.trans(cur, Instruction::Dec(d), t.to);
                    let borrow = if i + 1 == c { g.named("underflow") } else { g.fresh() };
                    g.trans(cur, Instruction::Zero(d), borrow);
                    if i + 1 < c {
                        cur = set_n(&mut g, borrow, d, zn, z0);
                    }
                }
            }
        }
    }

    let machine = b.build(init, m.accept, m.reject, Some(BoundClass::WeakN), 0);
    Ok(Weakened { machine, digits, zn, z0 })
}

/// "x_i <- 0" from `start`; returns the exit state.
fn set_zero(g: &mut Gadget<'_>, start: usize, x: usize) -> usize {
    let exit = g.fresh();
    g.trans(start, Instruction::Dec(x), start);
    g.trans(start, Instruction::Zero(x), exit);
    exit
}

/// "x_i <- n" from `start`; returns the exit state. Sequences decrement
/// before they increment so no counter transiently exceeds n.
fn set_n(g: &mut Gadget<'_>, start: usize, x: usize, zn: usize, z0: usize) -> usize {
    g.trans(start, Instruction::Dec(x), start);
    let fill = g.fresh();
    g.trans(start, Instruction::Zero(x), fill);
    g.seq(fill, &[Instruction::Dec(zn), Instruction::Inc(x), Instruction::Inc(z0)], fill);
    let restore = g.fresh();
    g.trans(fill, Instruction::Zero(zn), restore);
    g.seq(restore, &[Instruction::Dec(z0), Instruction::Inc(zn)], restore);
    let exit = g.fresh();
    g.trans(restore, Instruction::Zero(z0), exit);
    exit
}

/// "x_i = n?" from `start`; returns the (yes, no) exit states with `x_i`
/// restored.
fn is_n(g: &mut Gadget<'_>, start: usize, x: usize, zn: usize, z0: usize) -> (usize, usize) {
    g.seq(start, &[Instruction::Dec(x), Instruction::Dec(zn), Instruction::Inc(z0)], start);
    let drained = g.fresh();
    g.trans(start, Instruction::Zero(x), drained);
    let mut exits = [0; 2];
    for (k, test) in [Instruction::Zero(zn), Instruction::Nonzero(zn)].into_iter().enumerate() {
        let restore = g.fresh();
        g.trans(drained, test, restore);
        g.seq(restore, &[Instruction::Dec(z0), Instruction::Inc(x), Instruction::Inc(zn)], restore);
        exits[k] = g.fresh();
        g.trans(restore, Instruction::Zero(z0), exits[k]);
    }
    (exits[0], exits[1])
}

/// Result of [`tighten`]: the machine plus the subset mask of each counter.
#[derive(Clone, Debug)]
pub struct Tightened {
    pub machine: CounterMachine,
    /// `masks[i]` is the subset of source counters that counter `i` stands for.
    pub masks: Vec<u32>,
    pub source_counters: usize,
}

impl Tightened {
    /// Source counter values represented by lowered values.
    pub fn decode(&self, values: &[u32]) -> Vec<u32> {
        let entries: Vec<(u32, u32)> = self.masks.iter().copied().zip(values.iter().copied()).collect();
        decode_subsets(&entries, self.source_counters)
    }
}

fn subset_name(m: &CounterMachine, mask: u32) -> String {
    let members: Vec<&str> =
        (0..m.num_counters()).filter(|&x| mask & (1 << x) != 0).map(|x| m.counters[x].as_str()).collect();
    format!("y{{{}}}", members.join(","))
}

/// Lowers a weakly n-bounded machine to an n-bounded one.
pub fn tighten(m: &CounterMachine, max_counters: usize) -> Result<Tightened, BoundingError> {
    match m.bound {
        None => return Err(BoundingError::MissingBoundDeclaration(m.name.clone())),
        Some(BoundClass::Poly(c)) if c > 1 => {
            return Err(BoundingError::WrongBoundClass { name: m.name.clone(), bound: BoundClass::Poly(c) })
        }
        _ => {}
    }
    let k = m.num_counters();
    if k > max_counters {
        return Err(BoundingError::CounterCountTooLarge { counters: k, subsets: 1u64 << k.min(63), cap: max_counters });
    }
    let mut b = MachineBuilder::new(format!("{}-tight", m.name));
    let mut masks = Vec::with_capacity(1 << k);
    let mut index = vec![0usize; 1 << k];
    let singles: Vec<u32> = (0..m.input_arity).map(|x| 1 << x).collect();
    for mask in singles.iter().copied().chain((0..1u32 << k).filter(|mk| !singles.contains(mk))) {
        index[mask as usize] = b.counter(subset_name(m, mask));
        masks.push(mask);
    }
    b.set_input_arity(m.input_arity);
    for s in &m.states {
        b.state(s.clone());
    }
    let y = |mask: u32| index[mask as usize];
    let all = 0..1u32 << k;

    for (j, t) in m.transitions.iter().enumerate() {
        let src = &m.states[t.from];
        match t.ins {
            Instruction::Nop => b.trans(t.from, Instruction::Nop, t.to),
            Instruction::Nonzero(x) => {
                for mask in all.clone().filter(|mk| mk & (1 << x) != 0) {
                    b.trans(t.from, Instruction::Nonzero(y(mask)), t.to);
                }
            }
            Instruction::Zero(x) => {
                let tests: Vec<u32> = all.clone().filter(|mk| mk & (1 << x) != 0).collect();
                let mut g = Gadget::new(&mut b, src, &format!("zero{j}"));
                let mut cur = t.from;
                for (i, &mask) in tests.iter().enumerate() {
                    let next = if i + 1 == tests.len() { t.to } else { g.fresh() };
                    g.trans(cur, Instruction::Zero(y(mask)), next);
                    if next != t.to {
                        g.trans(next, Instruction::Nop, t.from);
                    }
                    cur = next;
                }
            }
            Instruction::Inc(x) => {
                let mut g = Gadget::new(&mut b, src, &format!("inc{j}"));
                for mask in all.clone().filter(|mk| mk & (1 << x) == 0) {
                    g.seq(t.from, &[Instruction::Dec(y(mask)), Instruction::Inc(y(mask | 1 << x))], t.to);
                }
            }
            Instruction::Dec(x) => {
                let mut g = Gadget::new(&mut b, src, &format!("dec{j}"));
                for mask in all.clone().filter(|mk| mk & (1 << x) != 0) {
                    g.seq(t.from, &[Instruction::Dec(y(mask)), Instruction::Inc(y(mask & !(1 << x)))], t.to);
                }
            }
        }
    }

    let machine = b.build(m.init, m.accept, m.reject, Some(BoundClass::N), 0);
    Ok(Tightened { machine, masks, source_counters: k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_example() {
        let d = encode_digits(59, 4, 3).unwrap();
        assert_eq!(d, vec![4, 1, 2]);
        assert_eq!(decode_digits(&d, 4), 59);
        assert_eq!(encode_digits(125, 4, 3), None);
    }

    #[test]
    fn subset_example() {
        let enc = encode_subsets(&[6, 1, 4], 6).unwrap();
        assert_eq!(enc, vec![(0b001, 2), (0b101, 3), (0b111, 1)]);
        assert_eq!(decode_subsets(&enc, 3), vec![6, 1, 4]);
        assert_eq!(encode_subsets(&[0, 0, 0], 5).unwrap(), vec![(0, 5)]);
    }

    #[test]
    fn digit_count_covers_slack() {
        assert_eq!(digits_for(1, 0), 1);
        assert_eq!(digits_for(1, 1), 2);
        assert_eq!(digits_for(2, 1), 2);
        assert_eq!(digits_for(2, 3), 3);
    }
}
