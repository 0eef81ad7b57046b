use anyhow::{bail, Context, Result};

use curvquant::deformation::{convergence_study, gap_ratios};
use curvquant::grid::GridSpec;
use curvquant::normal::{build_normal_chart, halving_radii, metric_expansion_fit, qmp_normal_asymptote, MIN_RESOLUTION};
use curvquant::quantization::{conformal_coefficient, qmp_dewitt, Variant};
use curvquant::quasiclassical::propagator_series;
use curvquant::spectral::{anomaly_gap, discretize, eigenvalues};
use curvquant::{geometry_jet, resolve_chart, Constants, MetricChart};

use crate::config::{List, Resolver};
use crate::output::{Cell, Table};
use crate::{
    AnomalyArgs, Command, Common, ConformalArgs, DeformArgs, NormalArgs, PointArgs, PropagatorArgs,
    QmpArgs, SpectrumArgs,
};

pub fn dispatch(r: &mut Resolver, common: &Common, cmd: &Command) -> Result<Table> {
    match cmd {
        Command::Curvature(a) => curvature(r, common, a),
        Command::Qmp(a) => qmp(r, common, a),
        Command::Normal(a) => normal(r, common, a),
        Command::Deform(a) => deform(r, common, a),
        Command::Spectrum(a) => spectrum(r, common, a),
        Command::Anomaly(a) => anomaly(r, common, a),
        Command::Propagator(a) => propagator(r, common, a),
        Command::Conformal(a) => conformal(r, a),
    }
}

fn chart(r: &mut Resolver, common: &Common) -> Result<MetricChart> {
    let id: String = r.require("chart", common.chart.clone())?;
    resolve_chart(&id).with_context(|| format!("chart `{id}`"))
}

fn constants(r: &mut Resolver, common: &Common) -> Result<Constants> {
    let hbar = r.or("hbar", common.hbar, 1.0)?;
    let mass = r.or("mass", common.mass, 1.0)?;
    Ok(Constants::new(hbar, mass)?)
}

fn point(chart: &MetricChart, p: List<f64>) -> Result<Vec<f64>> {
    if p.0.len() != chart.dim() {
        bail!("point {:?} has {} coordinates, chart `{}` needs {}", p.0, p.0.len(), chart.id(), chart.dim());
    }
    Ok(p.0)
}

/// Per-axis values from a list that is either one entry or one per axis.
fn per_axis<T: Copy>(name: &str, l: &List<T>, n: usize) -> Result<Vec<T>> {
    match l.0.len() {
        1 => Ok(vec![l.0[0]; n]),
        m if m == n => Ok(l.0.clone()),
        m => bail!("`{name}` has {m} entries, expected 1 or {n}"),
    }
}

fn points(r: &mut Resolver, chart: &MetricChart, a: &PointArgs) -> Result<Vec<Vec<f64>>> {
    let n = chart.dim();
    let at: Option<Vec<List<f64>>> = r.optional("at", (!a.at.is_empty()).then(|| a.at.clone()))?;
    if let Some(at) = at {
        return at.into_iter().map(|p| point(chart, p)).collect();
    }
    let grid: List<usize> = r.or("grid", a.grid.clone(), List(vec![8]))?;
    let nodes = per_axis("grid", &grid, n)?;
    let dom_lo = List(chart.domain().iter().map(|ax| ax.lo).collect());
    let dom_hi = List(chart.domain().iter().map(|ax| ax.hi).collect());
    let lo = per_axis("lo", &r.or("lo", a.lo.clone(), dom_lo)?, n)?;
    let hi = per_axis("hi", &r.or("hi", a.hi.clone(), dom_hi)?, n)?;
    for ax in 0..n {
        if !(lo[ax].is_finite() && hi[ax].is_finite() && lo[ax] < hi[ax]) {
            bail!("axis {ax} needs finite bounds lo < hi (use --lo/--hi), got [{}, {}]", lo[ax], hi[ax]);
        }
        if nodes[ax] == 0 {
            bail!("grid must have at least one node per axis");
        }
    }
    let total: usize = nodes.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![0.0; n];
        for ax in (0..n).rev() {
            let i = idx % nodes[ax];
            idx /= nodes[ax];
            let h = (hi[ax] - lo[ax]) / nodes[ax] as f64;
            p[ax] = lo[ax] + (i as f64 + 0.5) * h;
        }
        out.push(p);
    }
    Ok(out)
}

fn coord_columns(n: usize, prefix: &str) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn curvature(r: &mut Resolver, common: &Common, a: &PointArgs) -> Result<Table> {
    let chart = chart(r, common)?;
    let n = chart.dim();
    let mut cols = coord_columns(n, "q");
    cols.push("scalar_curvature".into());
    for i in 0..n {
        for j in i..n {
            cols.push(format!("ricci_{}{}", i + 1, j + 1));
        }
    }
    cols.push("det".into());
    let mut t = Table::new(cols);
    for q in points(r, &chart, a)? {
        let g = geometry_jet(&chart, &q)?;
        let mut row: Vec<Cell> = q.iter().map(|x| Cell::Num(*x)).collect();
        row.push(g.scalar_curvature.into());
        for i in 0..n {
            for j in i..n {
                row.push(g.ricci[(i, j)].into());
            }
        }
        row.push(g.det.into());
        t.push(row);
    }
    Ok(t)
}

fn qmp(r: &mut Resolver, common: &Common, a: &QmpArgs) -> Result<Table> {
    let chart = chart(r, common)?;
    let k = constants(r, common)?;
    let nu: Option<f64> = r.optional("nu", a.nu)?;
    let mut cols = coord_columns(chart.dim(), "q");
    cols.extend(["v_dw".into(), "nu_correction_density".into()]);
    if nu.is_some() {
        cols.extend(["nu".into(), "v_nu".into()]);
    }
    let mut t = Table::new(cols);
    for q in points(r, &chart, &a.points)? {
        let v = qmp_dewitt(&chart, &k, &q)?;
        let mut row: Vec<Cell> = q.iter().map(|x| Cell::Num(*x)).collect();
        row.push(v.v_dw.into());
        row.push(v.nu_correction_density.into());
        if let Some(nu) = nu {
            row.push(nu.into());
            row.push(v.v_nu(nu).into());
        }
        t.push(row);
    }
    Ok(t)
}

fn normal(r: &mut Resolver, common: &Common, a: &NormalArgs) -> Result<Table> {
    let chart = chart(r, common)?;
    let k = constants(r, common)?;
    let q0 = point(&chart, r.require("at", a.at.clone())?)?;
    let r0 = r.or("radius", a.radius, 0.2)?;
    let count = r.or("count", a.count, 6)?;
    let fit_radius = r.or("fit_radius", a.fit_radius, 0.05)?;
    let asym = qmp_normal_asymptote(&chart, &k, &q0, &halving_radii(r0, count))?;
    let nc = build_normal_chart(&chart, &q0, 2.0 * fit_radius, MIN_RESOLUTION)?;
    let fit = metric_expansion_fit(&nc, fit_radius)?;

    let mut t = Table::new(["quantity", "argument", "value", "reference"]);
    for (rad, v) in asym.radii.iter().zip(&asym.values) {
        t.push(vec!["qmp".into(), format!("{rad:.16e}").into(), (*v).into(), Cell::Empty]);
    }
    t.push(vec!["extrapolated".into(), "0".into(), asym.extrapolated.into(), asym.predicted.into()]);
    t.push(vec!["slope".into(), "".into(), asym.slope.into(), Cell::Empty]);
    t.push(vec!["sign".into(), "".into(), Cell::Int(asym.sign.into()), Cell::Empty]);
    t.push(vec!["scalar_curvature".into(), "".into(), asym.scalar_curvature.into(), Cell::Empty]);
    let n = chart.dim();
    for i in 0..n {
        for kk in 0..n {
            for j in 0..n {
                for l in 0..n {
                    t.push(vec![
                        "metric_coefficient".into(),
                        format!("{}{}{}{}", i + 1, kk + 1, j + 1, l + 1).into(),
                        fit.fitted[(i, kk, j, l)].into(),
                        fit.predicted[(i, kk, j, l)].into(),
                    ]);
                }
            }
        }
    }
    t.push(vec!["fit_condition".into(), format!("{fit_radius:.16e}").into(), fit.condition.into(), Cell::Empty]);
    Ok(t)
}

fn deform(r: &mut Resolver, common: &Common, a: &DeformArgs) -> Result<Table> {
    let k = constants(r, common)?;
    let field: String = r.or("field", a.field.clone(), "sin-x".into())?;
    let dim = r.or("dim", a.dim, 2)?;
    let eps: List<f64> = r.or("eps", a.eps.clone(), List(vec![1e-2, 5e-3, 2.5e-3]))?;
    let at: List<f64> = r.or("at", a.at.clone(), List(vec![0.3; dim]))?;
    if at.0.len() != dim {
        bail!("point {:?} needs {dim} coordinates", at.0);
    }
    let rows = convergence_study(dim, &field, &eps.0, &k, &at.0)?;
    let ratios = gap_ratios(&rows);
    let mut t = Table::new(["epsilon", "exact", "first_order", "gap", "gap_ratio"]);
    for (i, row) in rows.iter().enumerate() {
        let ratio = i.checked_sub(1).map(|j| ratios[j]);
        t.push(vec![
            row.epsilon.into(),
            row.exact.into(),
            row.first_order.into(),
            row.gap.into(),
            ratio.into(),
        ]);
    }
    Ok(t)
}

fn variant(r: &mut Resolver, flag: Option<String>, default: &str) -> Result<Variant> {
    let s: String = r.or("variant", flag, default.to_string())?;
    Ok(s.parse()?)
}

fn grid_spec(chart: &MetricChart, nodes: &List<usize>, guard_cells: usize) -> Result<GridSpec> {
    let nodes = per_axis("N", nodes, chart.dim())?;
    let mut spec = GridSpec::for_chart(chart, &nodes)?;
    if guard_cells > 0 {
        for (a, ax) in chart.domain().iter().enumerate() {
            if !ax.periodic && ax.lo.is_finite() && ax.hi.is_finite() {
                let h = (ax.hi - ax.lo) / (nodes[a] + 2 * guard_cells) as f64;
                let g = guard_cells as f64 * h;
                spec = spec.with_guard(a, g, g);
            }
        }
    }
    Ok(spec)
}

fn spectrum(r: &mut Resolver, common: &Common, a: &SpectrumArgs) -> Result<Table> {
    let chart = chart(r, common)?;
    let k = constants(r, common)?;
    let v = variant(r, a.variant.clone(), "SCH")?;
    let nodes: List<usize> = r.or("N", a.nodes.clone(), List(vec![64]))?;
    let count = r.or("k", a.k, 5)?;
    let guard = r.or("guard_cells", a.guard_cells, 0)?;
    let spec = grid_spec(&chart, &nodes, guard)?;
    let h = discretize(&chart, &k, v, None, &spec)?;
    let sp = eigenvalues(&h, count)?;
    let label = spec
        .node_counts()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x");
    let mut t = Table::new(["index", "eigenvalue", "variant", "chart", "N"]);
    for (i, e) in sp.eigenvalues.iter().enumerate() {
        t.push(vec![
            i.into(),
            (*e).into(),
            v.to_string().into(),
            chart.id().into(),
            label.clone().into(),
        ]);
    }
    Ok(t)
}

fn anomaly(r: &mut Resolver, common: &Common, a: &AnomalyArgs) -> Result<Table> {
    let chart_a = chart(r, common)?;
    let id_b: String = r.require("chart_b", a.chart_b.clone())?;
    let chart_b = resolve_chart(&id_b).with_context(|| format!("chart `{id_b}`"))?;
    let k = constants(r, common)?;
    let v = variant(r, a.variant.clone(), "DW")?;
    let nodes: List<usize> = r.or("N", a.nodes.clone(), List(vec![256]))?;
    let count = r.or("k", a.k, 5)?;
    let spec = grid_spec(&chart_a, &nodes, 0)?;
    let g = anomaly_gap(&chart_a, &chart_b, &k, v, &spec, count)?;
    let ratios = g.ratios();
    let mut t = Table::new(["index", "level_a", "level_b", "gap", "error_estimate", "ratio", "variant"]);
    for i in 0..count {
        t.push(vec![
            i.into(),
            g.levels_a[i].into(),
            g.levels_b[i].into(),
            g.gaps[i].into(),
            g.error_estimate[i].into(),
            ratios[i].into(),
            v.to_string().into(),
        ]);
    }
    Ok(t)
}

fn propagator(r: &mut Resolver, common: &Common, a: &PropagatorArgs) -> Result<Table> {
    let chart = chart(r, common)?;
    let k = constants(r, common)?;
    let q0 = point(&chart, r.require("at", a.at.clone())?)?;
    let seps: List<f64> = r.or("seps", a.seps.clone(), List(vec![0.4, 0.2, 0.1]))?;
    let dt = r.or("dt", a.dt, 1.0)?;
    let samples = propagator_series(&chart, &k, &q0, &seps.0, dt)?;
    let mut cols: Vec<String> = ["s", "dt", "action", "van_vleck", "v_tilde"].map(String::from).to_vec();
    cols.extend(coord_columns(chart.dim(), "q_prime"));
    let mut t = Table::new(cols);
    for s in samples {
        let mut row: Vec<Cell> = vec![
            s.distance.into(),
            (s.t - s.t_prime).into(),
            s.action.into(),
            s.van_vleck.into(),
            s.v_tilde.into(),
        ];
        row.extend(s.q_prime.iter().map(|x| Cell::Num(*x)));
        t.push(row);
    }
    Ok(t)
}

fn conformal(r: &mut Resolver, a: &ConformalArgs) -> Result<Table> {
    let ns: List<u32> = r.or("n", a.n.clone(), List((1..=8).collect()))?;
    let mut t = Table::new(["n", "conformal", "normal_coordinate", "equal"]);
    for n in ns.0 {
        let c = conformal_coefficient(n)?;
        t.push(vec![
            Cell::Int(n.into()),
            c.conformal.to_string().into(),
            c.normal_coordinate.to_string().into(),
            c.equal.into(),
        ]);
    }
    Ok(t)
}
