//! Enumeration oracles over the planted lifecycle, shared by the integration
//! tests and the acceptance harness. Each returns value-level rows in the
//! projection order of the corresponding query.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mlprov::model::SchemaVariant;
use mlprov::queries::{build, execute, value_rows, NamedQuery, Params};
use mlprov::store::TripleStore;
use mlprov::synthbench::{generate_store, Lifecycle, SyntheticParams};

pub fn f(v: f64) -> String {
    v.to_string()
}

fn location(l: &Lifecycle, run: usize) -> (&mlprov::synthbench::RawFile, String, String) {
    let file = &l.files[l.runs[run].prep.file];
    let field = &l.fields[file.field];
    (file, l.basins[field.basin].label.clone(), field.label.clone())
}

pub fn q1(l: &Lifecycle, run: usize) -> Vec<Vec<String>> {
    let p = &l.runs[run].prep;
    let (file, basin, field) = location(l, run);
    vec![vec![
        file.coordinates.clone(),
        basin,
        field,
        file.n_slices.to_string(),
        p.n_slices_selected().to_string(),
        p.slice_lo.to_string(),
        p.slice_hi.to_string(),
    ]]
}

pub fn q2(l: &Lifecycle, run: usize) -> Vec<Vec<String>> {
    let p = &l.runs[run].prep;
    vec![vec![p.tile_size.to_string(), f(p.noise_threshold), p.slice_lo.to_string(), p.slice_hi.to_string()]]
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Brute force over every model of the run: lowest batch loss, ties by
/// model IRI.
pub fn q3_argmin(l: &Lifecycle, run: usize) -> usize {
    let epochs = &l.runs[run].stages[0].epochs;
    (0..epochs.len())
        .min_by(|&a, &b| {
            min_of(&epochs[a].losses)
                .total_cmp(&min_of(&epochs[b].losses))
                .then_with(|| l.model_iri(run, a).to_string().cmp(&l.model_iri(run, b).to_string()))
        })
        .expect("runs have epochs")
}

pub fn q3(l: &Lifecycle, run: usize) -> Vec<Vec<String>> {
    let e = q3_argmin(l, run);
    let epoch = &l.runs[run].stages[0].epochs[e];
    let mut rows = Vec::new();
    for (hn, hv) in &epoch.hyperparams {
        for (mn, mv) in &epoch.measures {
            rows.push(vec![epoch.model.clone(), f(min_of(&epoch.losses)), hn.clone(), f(*hv), mn.clone(), f(*mv)]);
        }
    }
    rows
}

fn durations(times: &[(i64, i64)]) -> Vec<f64> {
    times.iter().map(|(s, e)| (e - s) as f64 / 1000.0).collect()
}

pub fn q4(l: &Lifecycle, run: usize) -> Vec<Vec<String>> {
    l.runs[run].stages[0]
        .epochs
        .iter()
        .enumerate()
        .map(|(e, epoch)| {
            let d = durations(&epoch.batch_times);
            let avg = d.iter().sum::<f64>() / d.len() as f64;
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![e.to_string(), f(avg), f(min_of(&d)), f(max)]
        })
        .collect()
}

pub fn selected_runs(l: &Lifecycle, lo: i64, hi: i64) -> Vec<usize> {
    (0..l.runs.len()).filter(|&i| l.runs[i].prep.slice_lo >= lo && l.runs[i].prep.slice_hi <= hi).collect()
}

pub fn q5(l: &Lifecycle, lo: i64, hi: i64) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in selected_runs(l, lo, hi) {
        for (e, epoch) in l.runs[i].stages[0].epochs.iter().enumerate() {
            let d = durations(&epoch.batch_times);
            let avg = d.iter().sum::<f64>() / d.len() as f64;
            for (n, v) in &epoch.measures {
                rows.push(vec![epoch.model.clone(), e.to_string(), n.clone(), f(*v), f(avg)]);
            }
        }
    }
    rows
}

pub fn q6(l: &Lifecycle, run: usize) -> Vec<Vec<String>> {
    let (file, basin, field) = location(l, run);
    vec![vec![file.id.clone(), file.n_slices.to_string(), basin, field]]
}

/// Groups merge when two training measures of one epoch share a value,
/// exactly as grouping on the value column does.
pub fn q7(l: &Lifecycle, lo: i64, hi: i64) -> Vec<Vec<String>> {
    let mut groups: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for i in selected_runs(l, lo, hi) {
        let run = &l.runs[i];
        let Some(validation) = run.stages.get(1) else { continue };
        for (e, epoch) in run.stages[0].epochs.iter().enumerate() {
            let loss = min_of(&epoch.losses);
            let val_epoch = &validation.epochs[e];
            for (hn, hv) in &epoch.hyperparams {
                for (_, ev) in &epoch.measures {
                    for (vn, vv) in &val_epoch.measures {
                        let key = vec![
                            epoch.model.clone(),
                            hn.clone(),
                            f(*hv),
                            f(*ev),
                            "batch_size".to_string(),
                            validation.batch_size.to_string(),
                            vn.clone(),
                            f(*vv),
                        ];
                        groups.insert(key, loss);
                    }
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|(key, loss)| {
            let mut row = vec![key[0].clone(), f(loss)];
            row.extend(key[1..].iter().cloned());
            row
        })
        .collect()
}

/// Sorted comparison; numeric cells may differ in the last bits from
/// summation order.
pub fn rows_match(got: &[Vec<String>], want: &[Vec<String>]) -> Result<(), String> {
    let mut want = want.to_vec();
    want.sort();
    if got.len() != want.len() {
        return Err(format!("{} rows, expected {}", got.len(), want.len()));
    }
    for (g, w) in got.iter().zip(&want) {
        let same = g.len() == w.len()
            && g.iter().zip(w).all(|(a, b)| {
                a == b
                    || matches!((a.parse::<f64>(), b.parse::<f64>()), (Ok(x), Ok(y)) if (x - y).abs() <= 1e-9 * x.abs().max(1.0))
            });
        if !same {
            return Err(format!("row {g:?}, expected {w:?}"));
        }
    }
    Ok(())
}

pub struct Fixture {
    pub life: Lifecycle,
    pub with: TripleStore,
    pub without: TripleStore,
}

impl Fixture {
    pub fn new(params: &SyntheticParams) -> Fixture {
        Fixture::from_life(Lifecycle::plant(params))
    }

    pub fn from_life(life: Lifecycle) -> Fixture {
        let (with, _) = generate_store(&life, SchemaVariant::WithProvMl).expect("generated data translates");
        let (without, _) = generate_store(&life, SchemaVariant::WithoutProvMl).expect("generated data translates");
        Fixture { life, with, without }
    }

    pub fn store(&self, v: SchemaVariant) -> &TripleStore {
        match v {
            SchemaVariant::WithProvMl => &self.with,
            SchemaVariant::WithoutProvMl => &self.without,
        }
    }

    pub fn run(&self, q: NamedQuery, v: SchemaVariant, params: &Params) -> Vec<Vec<String>> {
        let ast = build(q, v, params).expect("catalog queries build");
        value_rows(&execute(self.store(v), &ast).expect("catalog queries run"))
    }

    /// Parameters and oracle rows for every catalog query. Runs are picked
    /// from the middle of the lifecycle; the slice range covers two pairs.
    pub fn cases(&self) -> Vec<(NamedQuery, Params, Vec<Vec<String>>)> {
        let l = &self.life;
        let run = (l.runs.len() / 2).min(l.runs.len() - 1);
        let epoch = l.runs[run].stages[0].epochs.len() - 1;
        let model = Params::new().with("model", l.model_iri(run, epoch));
        let ds = Params::new().with("training_set", l.training_set_iri(run));
        let (lo, hi) = (l.runs[0].prep.slice_lo, l.runs[0].prep.slice_hi + 60);
        let range = Params::new().with("slice_lo", lo).with("slice_hi", hi);
        vec![
            (NamedQuery::Q1, model.clone(), q1(l, run)),
            (NamedQuery::Q2, model, q2(l, run)),
            (NamedQuery::Q3, ds.clone(), q3(l, run)),
            (NamedQuery::Q4, ds, q4(l, run)),
            (NamedQuery::Q5, range.clone(), q5(l, lo, hi)),
            (NamedQuery::Q6, Params::new().with("dataset", l.training_set_iri(run)), q6(l, run)),
            (NamedQuery::Q7, range, q7(l, lo, hi)),
        ]
    }
}
