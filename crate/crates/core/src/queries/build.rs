//! Q1..Q7 as pattern groups. Each helper qualifies an entity either with a
//! PROV-ML class or, in the generic encoding, through its prospective
//! counterpart and a tag or label.

use super::ast::{Bind, NamedQuery, Params, QueryAst, QueryPart};
use super::QueryError;
use crate::model::{ClassId, Iri, Literal, Namespace, RelationId, SchemaVariant, Term};
use crate::spec::{Qualifier, StageKind};
use crate::store::{AggFunc, Aggregate, CmpOp, Filter, OrderKey, PatternTerm, TriplePattern};

const EPOCH_SECTION: &str = "Epoch Execution";
const BATCH_SECTION: &str = "Batch Execution";

fn var(name: &str) -> PatternTerm {
    PatternTerm::var(name)
}

fn lit(text: &str) -> PatternTerm {
    PatternTerm::Const(Term::Literal(Literal::string(text)))
}

fn dom(local: &str) -> PatternTerm {
    Iri::new(Namespace::Dom, local).expect("fixed domain names are valid").into()
}

fn tp(s: &PatternTerm, p: RelationId, o: impl Into<PatternTerm>) -> TriplePattern {
    TriplePattern::new(s.clone(), p.iri(), o)
}

fn a(s: &PatternTerm, class: ClassId) -> TriplePattern {
    tp(s, RelationId::Type, class.iri())
}

/// Name of the auxiliary variable for the prospective node of `x`.
fn prospective_of(x: &PatternTerm) -> PatternTerm {
    match x {
        PatternTerm::Var(v) => var(&format!("{v}_psp")),
        PatternTerm::Const(t) => var(&format!("{}_psp", t.value_string().replace([':', '.'], "_"))),
    }
}

fn execution_class(kind: StageKind) -> ClassId {
    match kind {
        StageKind::Training => ClassId::TrainingExecution,
        StageKind::Validation => ClassId::ValidationExecution,
        StageKind::Evaluation => ClassId::EvaluationExecution,
    }
}

fn value_class(q: Qualifier) -> ClassId {
    match q {
        Qualifier::Model => ClassId::Model,
        Qualifier::ModelEvaluation => ClassId::ModelEvaluation,
        Qualifier::DatasetReference => ClassId::LearningDataset,
        Qualifier::FeatureSet => ClassId::FeatureSetData,
        Qualifier::Hyperparameter => ClassId::ModelHyperparameterValue,
        Qualifier::Plain => ClassId::AttributeValue,
    }
}

fn setting_class(q: Qualifier) -> ClassId {
    match q {
        Qualifier::Hyperparameter => ClassId::LearningHyperparameterSetting,
        Qualifier::ModelEvaluation => ClassId::EvaluationMeasure,
        _ => ClassId::Attribute,
    }
}

/// How a value hangs off its execution.
#[derive(Clone, Copy)]
enum Link {
    Generated,
    Used,
}

fn link(link: Link, exec: &PatternTerm, x: &PatternTerm) -> TriplePattern {
    match link {
        Link::Generated => tp(x, RelationId::WasGeneratedBy, exec.clone()),
        Link::Used => tp(exec, RelationId::Used, x.clone()),
    }
}

struct Builder {
    variant: SchemaVariant,
}

impl Builder {
    fn with(&self) -> bool {
        self.variant == SchemaVariant::WithProvMl
    }

    /// Stage execution of `kind`. 1 clause with PROV-ML, 4 without.
    fn stage_exec(&self, x: &PatternTerm, kind: StageKind) -> Vec<TriplePattern> {
        if self.with() {
            return vec![a(x, execution_class(kind))];
        }
        let p = prospective_of(x);
        vec![
            a(x, ClassId::DataTransformationExecution),
            tp(x, RelationId::WasInfluencedBy, p.clone()),
            a(&p, ClassId::DataTransformation),
            tp(&p, RelationId::Tag, lit(kind.tag())),
        ]
    }

    /// Section execution informed by `parent`. 2 clauses with, 5 without.
    fn section_exec(&self, x: &PatternTerm, parent: &PatternTerm, root: StageKind, label: &str) -> Vec<TriplePattern> {
        let mut out = vec![tp(x, RelationId::WasInformedBy, parent.clone())];
        if self.with() {
            let class = match root {
                StageKind::Training => ClassId::TrainingSectionExecution,
                _ => ClassId::LearningStageSectionExecution,
            };
            out.push(a(x, class));
        } else {
            let p = prospective_of(x);
            out.extend([
                a(x, ClassId::DataTransformationExecution),
                tp(x, RelationId::WasInfluencedBy, p.clone()),
                a(&p, ClassId::DataTransformation),
                tp(&p, RelationId::Label, lit(label)),
            ]);
        }
        out
    }

    /// Qualifies a value by its qualifier. 1 clause with, 4 without.
    fn qualified(&self, x: &PatternTerm, q: Qualifier) -> Vec<TriplePattern> {
        if self.with() {
            return vec![a(x, value_class(q))];
        }
        let p = prospective_of(x);
        vec![
            a(x, ClassId::AttributeValue),
            tp(x, RelationId::WasDerivedFrom, p.clone()),
            a(&p, ClassId::Attribute),
            tp(&p, RelationId::Tag, lit(q.tag().expect("qualified values carry a tag"))),
        ]
    }

    /// Linked and qualified value. 2 clauses with, 5 without.
    fn value(&self, l: Link, exec: &PatternTerm, x: &PatternTerm, q: Qualifier) -> Vec<TriplePattern> {
        let mut out = vec![link(l, exec, x)];
        out.extend(self.qualified(x, q));
        out
    }

    /// Generated value with its literal. 3 clauses with, 6 without.
    fn value_with_literal(&self, exec: &PatternTerm, x: &PatternTerm, q: Qualifier, v: &str) -> Vec<TriplePattern> {
        if self.with() {
            return vec![link(Link::Generated, exec, x), a(x, value_class(q)), tp(x, RelationId::Value, var(v))];
        }
        let p = prospective_of(x);
        vec![
            link(Link::Generated, exec, x),
            a(x, ClassId::AttributeValue),
            tp(x, RelationId::Value, var(v)),
            tp(x, RelationId::WasDerivedFrom, p.clone()),
            a(&p, ClassId::Attribute),
            tp(&p, RelationId::Tag, lit(q.tag().expect("qualified values carry a tag"))),
        ]
    }

    /// Value with literal and attribute name, which lives on the prospective
    /// side in both encodings. 6 clauses with, 7 without.
    #[allow(clippy::too_many_arguments)]
    fn named_value(
        &self,
        l: Link,
        class: ClassId,
        exec: &PatternTerm,
        x: &PatternTerm,
        q: Qualifier,
        v: &str,
        name: &str,
    ) -> Vec<TriplePattern> {
        let p = prospective_of(x);
        let mut out = vec![link(l, exec, x)];
        if self.with() {
            out.extend([
                a(x, class),
                tp(x, RelationId::Value, var(v)),
                tp(x, RelationId::WasDerivedFrom, p.clone()),
                a(&p, setting_class(q)),
                tp(&p, RelationId::Label, var(name)),
            ]);
        } else {
            out.extend([
                a(x, ClassId::AttributeValue),
                tp(x, RelationId::Value, var(v)),
                tp(x, RelationId::WasDerivedFrom, p.clone()),
                a(&p, ClassId::Attribute),
                tp(&p, RelationId::Tag, lit(q.tag().expect("qualified values carry a tag"))),
                tp(&p, RelationId::Label, var(name)),
            ]);
        }
        out
    }
}

/// Plain attribute lookup by name; identical in both encodings (4 clauses).
fn plain(l: Link, exec: &PatternTerm, attr: &str, v: &str) -> Vec<TriplePattern> {
    let x = var(&format!("{v}_node"));
    let p = var(&format!("{v}_psp"));
    vec![
        link(l, exec, &x),
        tp(&x, RelationId::Value, var(v)),
        tp(&x, RelationId::WasDerivedFrom, p.clone()),
        tp(&p, RelationId::Label, lit(attr)),
    ]
}

/// From a training set back to the slice selection (3 clauses).
fn to_selection(ds: &PatternTerm) -> Vec<TriplePattern> {
    vec![
        tp(ds, RelationId::WasGeneratedBy, var("tile")),
        tp(&var("tile"), RelationId::Used, var("selection")),
        tp(&var("selection"), RelationId::WasGeneratedBy, var("select")),
    ]
}

/// From the slice selection back to the metadata extraction (2 clauses).
fn to_extraction() -> Vec<TriplePattern> {
    vec![
        tp(&var("select"), RelationId::Used, var("seismic")),
        tp(&var("seismic"), RelationId::WasGeneratedBy, var("extract")),
    ]
}

/// Raw file through the domain graph to field and basin (6 clauses).
fn domain_of(raw: &PatternTerm, with_file_label: bool) -> Vec<TriplePattern> {
    let mut out = vec![
        tp(raw, RelationId::SeeAlso, var("file")),
        TriplePattern::new(var("file"), dom("inField"), var("field_node")),
        tp(&var("field_node"), RelationId::Label, var("field")),
        TriplePattern::new(var("field_node"), dom("inBasin"), var("basin_node")),
        tp(&var("basin_node"), RelationId::Label, var("basin")),
    ];
    if with_file_label {
        out.push(tp(&var("file"), RelationId::Label, var("seismic_file")));
    }
    out
}

fn dataset_part(q: &mut QueryAst) -> &mut Vec<TriplePattern> {
    let part = q.parts.iter_mut().find(|p| p.name == "training_dataset").expect("query has a dataset part");
    &mut part.patterns
}

fn slice_range(q: &mut QueryAst) {
    let d = dataset_part(q);
    d.extend(plain(Link::Used, &var("select"), "slice_lo", "slice_lo"));
    d.extend(plain(Link::Used, &var("select"), "slice_hi", "slice_hi"));
}

fn duration(q: &mut QueryAst) {
    q.binds.push(Bind { alias: "duration_ms".into(), minuend: "batch_end".into(), subtrahend: "batch_start".into() });
}

fn batch_times() -> Vec<TriplePattern> {
    vec![
        tp(&var("batch"), RelationId::StartedAtTime, var("batch_start")),
        tp(&var("batch"), RelationId::EndedAtTime, var("batch_end")),
    ]
}

fn part(name: &str, patterns: Vec<TriplePattern>) -> QueryPart {
    QueryPart { name: name.to_string(), patterns }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Accepts `prefix:local`, `<full-iri>` or a bare full IRI.
pub fn parse_iri_param(text: &str) -> Result<Iri, QueryError> {
    let t = text.trim();
    let t = t.strip_prefix('<').and_then(|s| s.strip_suffix('>')).unwrap_or(t);
    let bad = || QueryError::BadParameter(text.to_string());
    if let Some((ns, local)) = Namespace::split_full(t) {
        return Iri::new(ns, local).map_err(|_| bad());
    }
    Iri::parse_prefixed(t).map_err(|_| bad())
}

fn int_param(params: &Params, key: &str) -> Result<i64, QueryError> {
    let text = params.get(key)?;
    text.trim().parse().map_err(|_| QueryError::BadParameter(format!("{key}={text}")))
}

fn iri_param(params: &Params, key: &str) -> Result<PatternTerm, QueryError> {
    Ok(parse_iri_param(params.get(key)?)?.into())
}

/// Builds the AST of `q` in the given encoding. Pure and deterministic.
pub fn build(q: NamedQuery, variant: SchemaVariant, params: &Params) -> Result<QueryAst, QueryError> {
    let b = Builder { variant };
    let training = var("training");
    let epoch = var("epoch");
    let batch = var("batch");
    let model = var("model");
    let ds = var("dataset");
    let mut ast = QueryAst::new(q, variant);

    match q {
        NamedQuery::Q1 | NamedQuery::Q2 => {
            let m = iri_param(params, "model")?;
            let mut training_stage = vec![tp(&epoch, RelationId::WasInformedBy, training.clone())];
            training_stage.extend(b.stage_exec(&training, StageKind::Training));
            let mut dataset = b.value(Link::Used, &training, &ds, Qualifier::DatasetReference);
            dataset.extend(to_selection(&ds));
            // The model constant anchors the traversal; listed first so it
            // wins ties in the planner.
            ast.parts = vec![
                part("model", b.value(Link::Generated, &epoch, &m, Qualifier::Model)),
                part("training_stage", training_stage),
                part("training_dataset", dataset),
            ];
            slice_range(&mut ast);
            if q == NamedQuery::Q1 {
                let raw = var("raw_file");
                let d = dataset_part(&mut ast);
                d.extend(to_extraction());
                d.extend(plain(Link::Generated, &var("select"), "n_slices_selected", "n_slices_selected"));
                let mut file = vec![tp(&var("extract"), RelationId::Used, raw.clone())];
                file.extend(b.qualified(&raw, Qualifier::DatasetReference));
                file.extend(domain_of(&raw, false));
                file.extend(plain(Link::Generated, &var("extract"), "coordinates", "coordinates"));
                file.extend(plain(Link::Generated, &var("extract"), "n_slices", "n_slices"));
                ast.parts.push(part("seismic_file", file));
                ast.projection =
                    cols(&["coordinates", "basin", "field", "n_slices", "n_slices_selected", "slice_lo", "slice_hi"]);
            } else {
                let d = dataset_part(&mut ast);
                d.extend(plain(Link::Used, &var("tile"), "tile_size", "tile_size"));
                d.extend(plain(Link::Used, &var("tile"), "noise_threshold", "noise_threshold"));
                ast.projection = cols(&["tile_size", "noise_threshold", "slice_lo", "slice_hi"]);
            }
        }
        NamedQuery::Q3 => {
            let set = iri_param(params, "training_set")?;
            let mut stage = b.stage_exec(&training, StageKind::Training);
            stage.push(tp(&training, RelationId::Used, set));
            let mut model_part = b.value(Link::Generated, &epoch, &model, Qualifier::Model);
            model_part.push(tp(&model, RelationId::Value, var("model_id")));
            let mut batches = b.section_exec(&batch, &epoch, StageKind::Training, BATCH_SECTION);
            batches.extend(plain(Link::Generated, &batch, "loss", "loss"));
            ast.parts = vec![
                part("training_stage", stage),
                part("epoch_iteration", b.section_exec(&epoch, &training, StageKind::Training, EPOCH_SECTION)),
                part("model", model_part),
                part("batch_iteration", batches),
            ];
            ast.group_by = cols(&["model", "model_id"]);
            ast.aggregates = vec![Aggregate::new(AggFunc::Min, "loss", "min_loss")];
            ast.order_by = vec![OrderKey::asc("min_loss")];
            ast.limit = Some(1);
            ast.projection = cols(&["model", "model_id", "min_loss"]);

            let mut next = QueryAst::new(q, variant);
            next.parts = vec![
                part("model", vec![tp(&model, RelationId::WasGeneratedBy, epoch.clone())]),
                part(
                    "model_hyperparameters",
                    b.named_value(
                        Link::Generated,
                        ClassId::ModelHyperparameterValue,
                        &epoch,
                        &var("hyperparam"),
                        Qualifier::Hyperparameter,
                        "hp_value",
                        "hp_name",
                    ),
                ),
                part(
                    "model_evaluation",
                    b.named_value(
                        Link::Generated,
                        ClassId::ModelEvaluation,
                        &epoch,
                        &var("evaluation"),
                        Qualifier::ModelEvaluation,
                        "eval_value",
                        "eval_name",
                    ),
                ),
            ];
            next.projection = cols(&["model_id", "min_loss", "hp_name", "hp_value", "eval_name", "eval_value"]);
            next.order_by = vec![OrderKey::asc("hp_name"), OrderKey::asc("eval_name")];
            ast.then = Some((cols(&["model", "model_id", "min_loss"]), Box::new(next)));
        }
        NamedQuery::Q4 => {
            let set = iri_param(params, "training_set")?;
            let mut stage = b.stage_exec(&training, StageKind::Training);
            stage.push(tp(&training, RelationId::Used, set));
            let mut epochs = b.section_exec(&epoch, &training, StageKind::Training, EPOCH_SECTION);
            epochs.extend(plain(Link::Generated, &epoch, "epoch", "epoch_no"));
            let mut batches = b.section_exec(&batch, &epoch, StageKind::Training, BATCH_SECTION);
            batches.extend(batch_times());
            ast.parts =
                vec![part("training_stage", stage), part("epoch_iteration", epochs), part("batch_iteration", batches)];
            duration(&mut ast);
            ast.group_by = cols(&["epoch_no"]);
            ast.aggregates = vec![
                Aggregate::new(AggFunc::Avg, "duration_ms", "avg_ms"),
                Aggregate::new(AggFunc::Min, "duration_ms", "min_ms"),
                Aggregate::new(AggFunc::Max, "duration_ms", "max_ms"),
            ];
            ast.order_by = vec![OrderKey::asc("epoch_no")];
            ast.projection = cols(&["epoch_no", "avg_ms", "min_ms", "max_ms"]);
        }
        NamedQuery::Q5 | NamedQuery::Q7 => {
            let lo = int_param(params, "slice_lo")?;
            let hi = int_param(params, "slice_hi")?;
            let mut dataset = b.value(Link::Used, &training, &ds, Qualifier::DatasetReference);
            dataset.extend(to_selection(&ds));
            ast.parts = vec![
                part("training_dataset", dataset),
                part("training_stage", b.stage_exec(&training, StageKind::Training)),
                part("epoch_iteration", b.section_exec(&epoch, &training, StageKind::Training, EPOCH_SECTION)),
            ];
            slice_range(&mut ast);
            ast.filters = vec![
                Filter::var_const("slice_lo", CmpOp::Ge, Literal::integer(lo)),
                Filter::var_const("slice_hi", CmpOp::Le, Literal::integer(hi)),
            ];
            if q == NamedQuery::Q5 {
                ast.parts[2].patterns.extend(plain(Link::Generated, &epoch, "epoch", "epoch_no"));
                let mut batches = b.section_exec(&batch, &epoch, StageKind::Training, BATCH_SECTION);
                batches.extend(batch_times());
                let mut model_part = b.value(Link::Generated, &epoch, &model, Qualifier::Model);
                model_part.push(tp(&model, RelationId::Value, var("model_id")));
                ast.parts.extend([
                    part("batch_iteration", batches),
                    part("model", model_part),
                    part(
                        "model_evaluation",
                        b.named_value(
                            Link::Generated,
                            ClassId::ModelEvaluation,
                            &epoch,
                            &var("evaluation"),
                            Qualifier::ModelEvaluation,
                            "eval_value",
                            "eval_name",
                        ),
                    ),
                ]);
                duration(&mut ast);
                ast.group_by = cols(&["model", "model_id", "epoch_no", "eval_name", "eval_value"]);
                ast.aggregates = vec![Aggregate::new(AggFunc::Avg, "duration_ms", "avg_batch_ms")];
                ast.order_by = vec![OrderKey::asc("epoch_no")];
                ast.projection = cols(&["model_id", "epoch_no", "eval_name", "eval_value", "avg_batch_ms"]);
            } else {
                let validation = var("validation");
                let val_epoch = var("validation_epoch");
                let mut batches = b.section_exec(&batch, &epoch, StageKind::Training, BATCH_SECTION);
                batches.extend(plain(Link::Generated, &batch, "loss", "loss"));
                let mut val_stage = b.stage_exec(&validation, StageKind::Validation);
                val_stage.extend(b.section_exec(&val_epoch, &validation, StageKind::Validation, EPOCH_SECTION));
                val_stage.push(tp(&val_epoch, RelationId::Used, model.clone()));
                ast.parts.extend([
                    part(
                        "model_hyperparameters",
                        b.named_value(
                            Link::Generated,
                            ClassId::ModelHyperparameterValue,
                            &epoch,
                            &var("hyperparam"),
                            Qualifier::Hyperparameter,
                            "hp_value",
                            "hp_name",
                        ),
                    ),
                    part("model", b.value(Link::Generated, &epoch, &model, Qualifier::Model)),
                    part(
                        "model_evaluation",
                        b.value_with_literal(&epoch, &var("evaluation"), Qualifier::ModelEvaluation, "eval_value"),
                    ),
                    part("model_name", vec![tp(&model, RelationId::Value, var("model_id"))]),
                    part("batch_iteration", batches),
                    part("validation_stage", val_stage),
                    part(
                        "validation_hyperparameters",
                        b.named_value(
                            Link::Used,
                            ClassId::LearningHyperparameterValue,
                            &validation,
                            &var("validation_hyperparam"),
                            Qualifier::Hyperparameter,
                            "val_hp_value",
                            "val_hp_name",
                        ),
                    ),
                    part(
                        "validation_evaluation",
                        b.named_value(
                            Link::Generated,
                            ClassId::ModelEvaluation,
                            &val_epoch,
                            &var("validation_evaluation"),
                            Qualifier::ModelEvaluation,
                            "val_eval_value",
                            "val_eval_name",
                        ),
                    ),
                ]);
                let key = [
                    "model",
                    "model_id",
                    "hp_name",
                    "hp_value",
                    "eval_value",
                    "val_hp_name",
                    "val_hp_value",
                    "val_eval_name",
                    "val_eval_value",
                ];
                ast.group_by = cols(&key);
                ast.aggregates = vec![Aggregate::new(AggFunc::Min, "loss", "min_loss")];
                ast.order_by = vec![OrderKey::asc("min_loss")];
                let mut projection = cols(&["model_id", "min_loss"]);
                projection.extend(cols(&key[2..]));
                ast.projection = projection;
            }
        }
        NamedQuery::Q6 => {
            let set = iri_param(params, "dataset")?;
            let raw = var("raw_file");
            let mut dataset = b.qualified(&set, Qualifier::DatasetReference);
            dataset.extend(to_selection(&set));
            dataset.extend(to_extraction());
            let mut file = vec![tp(&var("extract"), RelationId::Used, raw.clone())];
            file.extend(b.qualified(&raw, Qualifier::DatasetReference));
            file.extend(domain_of(&raw, true));
            file.extend(plain(Link::Generated, &var("extract"), "n_slices", "n_slices"));
            ast.parts = vec![part("training_dataset", dataset), part("seismic_file", file)];
            ast.projection = cols(&["seismic_file", "n_slices", "basin", "field"]);
        }
    }
    ast.check(&[])?;
    Ok(ast)
}
