use std::io::{self, Write};

use super::Abstraction;

fn header_comment(w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash: {h}")?;
    }
    Ok(())
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

fn numbered(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

/// `state_id,x1..xn,label_bits,gamma1_1..gamma1_n`.
pub fn write_states_csv(abs: &Abstraction, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    let n = abs.states.dim();
    header_comment(w, config_hash)?;
    writeln!(w, "state_id,{},label_bits,{}", numbered("x", n), numbered("gamma1_", n))?;
    for id in 0..abs.n_states() {
        writeln!(
            w,
            "{id},{},{},{}",
            join(abs.states.point(id)),
            abs.labels[id],
            join(abs.gamma1[id].iter().copied())
        )?;
    }
    Ok(())
}

/// `input_id,u1..um`.
pub fn write_inputs_csv(abs: &Abstraction, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    header_comment(w, config_hash)?;
    writeln!(w, "input_id,{}", numbered("u", abs.inputs.dim()))?;
    for id in 0..abs.inputs.len() {
        writeln!(w, "{id},{}", join(abs.inputs.point(id)))?;
    }
    Ok(())
}

/// `state_id,input_id,tau,succ_id`, sorted by state, input and successor.
pub fn write_transitions_csv(abs: &Abstraction, w: &mut impl Write, config_hash: Option<&str>) -> io::Result<()> {
    header_comment(w, config_hash)?;
    writeln!(w, "state_id,input_id,tau,succ_id")?;
    for (s, acts) in abs.actions.iter().enumerate() {
        for a in acts {
            for succ in &a.successors {
                writeln!(w, "{s},{},{:.16e},{succ}", a.input, a.tau)?;
            }
        }
    }
    Ok(())
}
