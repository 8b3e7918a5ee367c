//! Words over polycyclic generators, stored as run-length sequences of
//! signed letters. A run `(g, e)` stands for the letter x_g raised to e.

pub type Word = Vec<(usize, i64)>;

/// Formal inverse: reverse the runs and negate every exponent.
pub fn inverse_word(w: &[(usize, i64)]) -> Word {
    w.iter().rev().map(|&(g, e)| (g, -e)).collect()
}

/// Appends a run, merging with the last run when the generator matches.
/// Runs that cancel to zero are dropped.
pub fn push_run(w: &mut Word, run: (usize, i64)) {
    if run.1 == 0 {
        return;
    }
    if let Some(last) = w.last_mut() {
        if last.0 == run.0 {
            match last.1.checked_add(run.1) {
                Some(0) => {
                    w.pop();
                }
                Some(e) => last.1 = e,
                // keep the runs separate rather than overflow
                None => w.push(run),
            }
            return;
        }
    }
    w.push(run);
}

/// The word w^q, materialized. Callers are responsible for budgeting the
/// |q|·|w| growth before invoking this.
pub fn word_power(w: &[(usize, i64)], q: i64) -> Word {
    let (unit, reps) = if q >= 0 {
        (w.to_vec(), q as u64)
    } else {
        (inverse_word(w), q.unsigned_abs())
    };
    let mut out = Word::new();
    for _ in 0..reps {
        for &r in &unit {
            push_run(&mut out, r);
        }
    }
    out
}
