//! Emission of self-contained matplotlib scripts. The data is embedded in
//! the script, so nothing but Python and matplotlib is needed to render it.

use std::fmt::Write as _;
use std::path::Path;

use cpo_core::Error;

enum Layout {
    Lineshape,
    Sweep,
    TimeSeries,
    Generic,
}

impl Layout {
    fn detect(header: &[String]) -> Self {
        let cols: Vec<&str> = header.iter().map(String::as_str).collect();
        match cols.as_slice() {
            ["delta", "signal"] => Layout::Lineshape,
            ["S", "A0", "A1", "w0", "w1", ..] => Layout::Sweep,
            ["t", ..] => Layout::TimeSeries,
            _ => Layout::Generic,
        }
    }
}

pub fn script_for(input: &Path) -> Result<String, Error> {
    let mut reader = csv::Reader::from_path(input)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.len() < 2 {
        return Err(Error::Data(format!("{} needs at least two columns", input.display())));
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(field.trim().parse::<f64>().ok());
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Data(format!("{} has no data rows", input.display())));
    }

    let name = input.file_name().map_or_else(|| "data".into(), |n| n.to_string_lossy().into_owned());
    let stem = input.file_stem().map_or_else(|| "plot".into(), |n| n.to_string_lossy().into_owned());
    let mut py = String::new();
    let _ = writeln!(py, "#!/usr/bin/env python3");
    let _ = writeln!(py, "\"\"\"Plot of {name}. Usage: python3 this_script.py [output.png]\"\"\"");
    let _ = writeln!(py, "import sys\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n");
    let _ = writeln!(py, "nan = float(\"nan\")");
    let _ = writeln!(py, "data = {{");
    for (h, col) in header.iter().zip(&columns) {
        if h == "note" {
            continue;
        }
        let values: Vec<String> = col
            .iter()
            .map(|v| match v {
                Some(x) if x.is_finite() => format!("{x:e}"),
                _ => "nan".into(),
            })
            .collect();
        let _ = writeln!(py, "    {:?}: [{}],", h, values.join(", "));
    }
    let _ = writeln!(py, "}}\n");

    match Layout::detect(&header) {
        Layout::Lineshape => {
            py.push_str(
                "fig, ax = plt.subplots(figsize=(6, 4))\n\
                 ax.plot(data[\"delta\"], data[\"signal\"], \".-\", ms=3)\n\
                 ax.set_xlabel(\"beat detuning δ\")\n\
                 ax.set_ylabel(\"⟨n₁ − n₀⟩\")\n",
            );
        }
        Layout::Sweep => {
            py.push_str(
                "fig, (ax_a, ax_w) = plt.subplots(1, 2, figsize=(10, 4))\n\
                 for key in (\"A0\", \"A1\"):\n\
                 \x20   ax_a.plot(data[\"S\"], data[key], \"o-\", ms=3, label=key)\n\
                 for key in (\"w0\", \"w1\"):\n\
                 \x20   ax_w.plot(data[\"S\"], data[key], \"o-\", ms=3, label=key)\n\
                 for ax, label in ((ax_a, \"amplitude\"), (ax_w, \"half-width\")):\n\
                 \x20   ax.set_xscale(\"log\")\n\
                 \x20   ax.set_xlabel(\"saturation S\")\n\
                 \x20   ax.set_ylabel(label)\n\
                 \x20   ax.legend()\n",
            );
        }
        Layout::TimeSeries => {
            let wanted: Vec<&String> = header[1..]
                .iter()
                .filter(|h| !matches!(h.as_str(), "trace_flux" | "note"))
                .collect();
            let _ = writeln!(py, "fig, ax = plt.subplots(figsize=(8, 4))");
            let _ = writeln!(py, "for key in {:?}:", wanted);
            py.push_str(
                "    ax.plot(data[\"t\"], data[key], lw=0.8, label=key)\n\
                 ax.set_xlabel(\"t\")\n\
                 ax.legend()\n",
            );
        }
        Layout::Generic => {
            let x = &header[0];
            let _ = writeln!(py, "fig, ax = plt.subplots(figsize=(6, 4))");
            let _ = writeln!(py, "for key in [k for k in data if k != {x:?}]:");
            let _ = writeln!(py, "    ax.plot(data[{x:?}], data[key], \".-\", label=key)");
            let _ = writeln!(py, "ax.set_xlabel({x:?})\nax.legend()");
        }
    }
    let _ = writeln!(py, "ax_title = {name:?}");
    let _ = writeln!(py, "fig.suptitle(ax_title)\nfig.tight_layout()");
    let _ = writeln!(py, "out = sys.argv[1] if len(sys.argv) > 1 else {:?}", format!("{stem}.png"));
    let _ = writeln!(py, "fig.savefig(out, dpi=150)\nprint(out)");
    Ok(py)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(contents: &str) -> String {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, contents).unwrap();
        script_for(&path).unwrap()
    }

    #[test]
    fn layouts_follow_the_header() {
        assert!(script("delta,signal\n0,1\n1,2\n").contains("beat detuning"));
        let sweep = script("S,A0,A1,w0,w1,B,note\n1,0.1,0.2,0.3,0.4,0.5,\n2,,,,,,failed\n");
        assert!(sweep.contains("set_xscale"));
        assert!(sweep.contains("\"A0\": [1e-1, nan]"));
        assert!(!sweep.contains("\"note\""));
        assert!(script("t,n1,n0\n0,1,0\n").contains("for key in [\"n1\", \"n0\"]:"));
        assert!(script("x,y\n0,1\n").contains("data[\"x\"]"));
    }

    #[test]
    fn empty_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.csv");
        std::fs::write(&path, "delta,signal\n").unwrap();
        assert!(matches!(script_for(&path), Err(Error::Data(_))));
    }
}
