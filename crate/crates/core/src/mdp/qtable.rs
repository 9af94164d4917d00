use std::fmt::Display;
use std::hash::Hash;
use std::io;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MdpError;

/// How values of newly keyed pairs are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QInit {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl Default for QInit {
    fn default() -> Self {
        QInit::Uniform { lo: 0.0, hi: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f64,
    initial: f64,
}

/// Action values keyed by `(state, action)`. Iteration follows insertion
/// order, and random initial values come from the table's own generator,
/// so a table's contents depend only on its seed and the sequence of calls.
#[derive(Debug, Clone)]
pub struct QTable<S, A> {
    entries: IndexMap<(S, A), Entry>,
    init: QInit,
    rng: ChaCha8Rng,
}

impl<S: Clone + Eq + Hash, A: Clone + Eq + Hash> QTable<S, A> {
    pub fn new(init: QInit, seed: u64) -> Self {
        QTable {
            entries: IndexMap::new(),
            init,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn init(&self) -> QInit {
        self.init
    }

    pub fn set_init(&mut self, init: QInit) {
        self.init = init;
    }

    fn draw(&mut self) -> f64 {
        match self.init {
            QInit::Constant(v) => v,
            QInit::Uniform { lo, hi } if hi > lo => self.rng.gen_range(lo..hi),
            QInit::Uniform { lo, .. } => lo,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, s: &S, a: &A) -> bool {
        self.entries.contains_key(&(s.clone(), a.clone()))
    }

    pub fn get(&self, s: &S, a: &A) -> Option<f64> {
        self.entries.get(&(s.clone(), a.clone())).map(|e| e.value)
    }

    /// The value the pair was created with.
    pub fn initial(&self, s: &S, a: &A) -> Option<f64> {
        self.entries.get(&(s.clone(), a.clone())).map(|e| e.initial)
    }

    /// Value of the pair, adding it with a fresh initial value if absent.
    pub fn ensure(&mut self, s: &S, a: &A) -> f64 {
        let key = (s.clone(), a.clone());
        if let Some(e) = self.entries.get(&key) {
            return e.value;
        }
        let v = self.draw();
        self.entries.insert(key, Entry { value: v, initial: v });
        v
    }

    pub fn set(&mut self, s: &S, a: &A, value: f64) {
        self.ensure(s, a);
        self.entries[&(s.clone(), a.clone())].value = value;
    }

    /// Inserts an entry with an explicit value, which also becomes its
    /// initial value.
    pub fn insert(&mut self, s: S, a: A, value: f64) {
        self.entries.insert(
            (s, a),
            Entry {
                value,
                initial: value,
            },
        );
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &A, f64)> {
        self.entries.iter().map(|((s, a), e)| (s, a, e.value))
    }

    pub fn keys(&self) -> impl Iterator<Item = &(S, A)> {
        self.entries.keys()
    }

    /// Largest value among `actions` at `s`; absent pairs are added first.
    pub fn max_value(&mut self, s: &S, actions: &[A]) -> f64 {
        actions
            .iter()
            .map(|a| self.ensure(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn entry_initial_pairs(&self) -> impl Iterator<Item = (&(S, A), f64, f64)> {
        self.entries.iter().map(|(k, e)| (k, e.value, e.initial))
    }

    pub(crate) fn insert_entry(&mut self, s: S, a: A, value: f64, initial: f64) {
        self.entries.insert((s, a), Entry { value, initial });
    }

    pub(crate) fn take_rng(self) -> ChaCha8Rng {
        self.rng
    }

    pub(crate) fn with_rng(init: QInit, rng: ChaCha8Rng) -> Self {
        QTable {
            entries: IndexMap::new(),
            init,
            rng,
        }
    }
}

impl<S, A> QTable<S, A>
where
    S: Clone + Eq + Hash + Display + FromStr,
    A: Clone + Eq + Hash + Display + FromStr,
{
    /// Writes `state,action,value` rows in table order.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), MdpError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["state", "action", "value"])?;
        for (s, a, v) in self.iter() {
            out.write_record([s.to_string(), a.to_string(), format!("{v:?}")])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R, init: QInit, seed: u64) -> Result<Self, MdpError> {
        let mut table = QTable::new(init, seed);
        let mut input = csv::Reader::from_reader(r);
        for (i, record) in input.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let field = |k: usize| {
                record.get(k).ok_or_else(|| MdpError::Format {
                    line,
                    msg: "expected three fields".into(),
                })
            };
            let s = field(0)?.parse().map_err(|_| MdpError::Format {
                line,
                msg: format!("bad state '{}'", field(0).unwrap_or_default()),
            })?;
            let a = field(1)?.parse().map_err(|_| MdpError::Format {
                line,
                msg: format!("bad action '{}'", field(1).unwrap_or_default()),
            })?;
            let v: f64 = field(2)?.parse().map_err(|_| MdpError::Format {
                line,
                msg: "bad value".into(),
            })?;
            table.insert(s, a, v);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensure_draws_once() {
        let mut q: QTable<u32, u32> = QTable::new(QInit::Uniform { lo: 0.0, hi: 0.1 }, 7);
        let v = q.ensure(&1, &2);
        assert!((0.0..0.1).contains(&v));
        assert_eq!(q.ensure(&1, &2), v);
        assert_eq!(q.initial(&1, &2), Some(v));
        q.set(&1, &2, 3.0);
        assert_eq!(q.get(&1, &2), Some(3.0));
        assert_eq!(q.initial(&1, &2), Some(v));
    }

    #[test]
    fn same_seed_same_values() {
        let mut a: QTable<u32, u32> = QTable::new(QInit::default(), 3);
        let mut b: QTable<u32, u32> = QTable::new(QInit::default(), 3);
        for i in 0..10 {
            assert_eq!(a.ensure(&i, &0), b.ensure(&i, &0));
        }
    }

    #[test]
    fn csv_round_trip_with_quoted_fields() {
        let mut q: QTable<String, String> = QTable::new(QInit::Constant(0.0), 0);
        q.insert("(0,1)".into(), "up".into(), -0.25);
        q.insert("(2,3)".into(), "left".into(), 1e-17);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("state,action,value\n\"(0,1)\",up,-0.25\n"));
        let back: QTable<String, String> =
            QTable::read_csv(buf.as_slice(), QInit::Constant(0.0), 0).unwrap();
        assert_eq!(back.get(&"(2,3)".into(), &"left".into()), Some(1e-17));
        assert_eq!(back.len(), 2);
    }
}
