//! CSV files and aligned text tables.

use std::fmt::Write as _;

use nfmlab_core::metrics::{EvalReport, ZTableRow};

pub fn loss_csv(history: &[f64], mode: &str) -> String {
    let mut s = String::from("step,loss,mode\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(s, "{i},{l},{mode}");
    }
    s
}

pub fn eval_csv(rows: &[EvalReport]) -> String {
    let mut s = String::from("nfe,solver,schedule,guidance,w2,kappa\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.nfe, r.solver, r.schedule, r.guidance, r.w2, r.kappa);
    }
    s
}

pub fn ztable_csv(rows: &[ZTableRow]) -> String {
    let mut s = String::from("eta,dx_1,dz_1,dx_2,dz_2,dx_3,dz_3\n");
    for r in rows {
        let _ = write!(s, "{}", r.eta);
        for i in 0..3 {
            let _ = write!(s, ",{},{}", r.dx[i], r.dz[i]);
        }
        s.push('\n');
    }
    s
}

/// Right-aligned columns separated by two spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| -> String {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{}{c}", " ".repeat(w - c.chars().count())))
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(&mut headers.iter().copied());
    for row in rows {
        s.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    s
}

pub fn eval_table(rows: &[EvalReport]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.nfe.to_string(),
                r.solver.clone(),
                r.schedule.clone(),
                format!("{}", r.guidance),
                format!("{:.4}", r.w2),
                format!("{:.4}", r.kappa),
            ]
        })
        .collect();
    table(&["NFE", "solver", "schedule", "w", "W2", "kappa"], &body)
}

pub fn ztable_table(rows: &[ZTableRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![format!("{}", r.eta)];
            for i in 0..3 {
                v.push(format!("{:.3}", r.dx[i]));
                v.push(format!("{:.3}", r.dz[i]));
            }
            v
        })
        .collect();
    table(
        &["eta", "dx(x≠,ε≠)", "dz(x≠,ε≠)", "dx(x=,ε≠)", "dz(x=,ε≠)", "dx(x≠,ε=)", "dz(x≠,ε=)"],
        &body,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned() {
        let t = table(&["a", "bbb"], &[vec!["10".into(), "2".into()]]);
        assert_eq!(t, " a  bbb\n10    2\n");
    }

    #[test]
    fn csv_headers() {
        assert!(loss_csv(&[0.5], "fm").starts_with("step,loss,mode\n0,0.5,fm\n"));
        assert_eq!(eval_csv(&[]), "nfe,solver,schedule,guidance,w2,kappa\n");
        let z = ZTableRow { eta: 0.05, dx: [1.0, 0.05, 1.0], dz: [1.0, 0.8, 0.9] };
        assert_eq!(ztable_csv(&[z]).lines().nth(1).unwrap(), "0.05,1,1,0.05,0.8,1,0.9");
    }
}
