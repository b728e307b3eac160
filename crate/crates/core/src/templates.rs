//! Russian SuperGLUE prompt templates for three model families.
//!
//! Patterns use `{field}` placeholders. Two expression placeholders are
//! understood for RuCoS: `{query.replace('@placeholder', entities[i])}` and
//! `{', '.join(entities)}`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{task} instance lacks field `{field}`")]
    MissingField { task: Task, field: String },
    #[error("template for {spec} applied to a {instance} instance")]
    TaskMismatch { spec: Task, instance: Task },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TemplateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Lidirus,
    Rcb,
    Parus,
    Muserc,
    Terra,
    Russe,
    Rwsd,
    Danetqa,
    Rucos,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Lidirus,
        Task::Rcb,
        Task::Parus,
        Task::Muserc,
        Task::Terra,
        Task::Russe,
        Task::Rwsd,
        Task::Danetqa,
        Task::Rucos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Lidirus => "lidirus",
            Task::Rcb => "rcb",
            Task::Parus => "parus",
            Task::Muserc => "muserc",
            Task::Terra => "terra",
            Task::Russe => "russe",
            Task::Rwsd => "rwsd",
            Task::Danetqa => "danetqa",
            Task::Rucos => "rucos",
        }
    }

    /// Keys every instance of this task must carry.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            Task::Lidirus | Task::Rcb | Task::Terra => &["premise", "hypothesis"],
            Task::Parus => &["premise", "choice1", "choice2"],
            Task::Muserc => &["passage", "question", "answer"],
            Task::Russe => &["sentence1", "sentence2", "word"],
            Task::Rwsd => &[],
            Task::Danetqa => &["question", "passage"],
            Task::Rucos => &["passage", "query", "entities"],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == lower)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `<s> … </s></s> … </s>` separators.
    RobertaStyle,
    /// `[CLS] … [SEP] … [SEP]` separators.
    BertStyle,
    /// Task-prefixed text-to-text prompts.
    T5Style,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::RobertaStyle, Family::BertStyle, Family::T5Style];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::RobertaStyle => "roberta_style",
            Family::BertStyle => "bert_style",
            Family::T5Style => "t5_style",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.as_str().trim_end_matches("_style") == s)
            .ok_or_else(|| format!("unknown family `{s}` (roberta_style, bert_style, t5_style)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSet {
    Fixed(Vec<&'static str>),
    /// One label per candidate entity of the instance.
    Entities,
    /// Constant prediction, no scoring.
    Constant(&'static str),
}

/// How a template turns one instance into scorable strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// One string, scored against each label.
    Shared,
    /// One string per candidate; `{hypothesis}` is bound to `choice1`, `choice2`.
    PerChoice,
    /// One string per entity through the `query.replace` placeholder.
    PerEntity,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSpec {
    pub task: Task,
    pub family: Family,
    pub pattern: &'static str,
    pub labels: LabelSet,
    mode: Mode,
}

const REPLACE_EXPR: &str = "query.replace('@placeholder', entities[i])";
const JOIN_EXPR: &str = "', '.join(entities)";

impl TemplateSpec {
    pub fn builtin(task: Task, family: Family) -> TemplateSpec {
        use Family::*;
        use Task::*;
        let nli = ["entailment", "not_entailment"];
        let t5_nli = ["entails", "doesn't entail"];
        let rcb = ["entailment", "contradiction", "neutral"];
        let binary = ["0", "1"];
        let yes_no = ["no", "yes"];
        let (pattern, labels, mode): (&'static str, LabelSet, Mode) = match (task, family) {
            (Lidirus | Terra, RobertaStyle) => ("<s> {premise} </s></s> {hypothesis} </s>", LabelSet::Fixed(nli.into()), Mode::Shared),
            (Lidirus | Terra, BertStyle) => ("[CLS] {premise} [SEP] {hypothesis} [SEP]", LabelSet::Fixed(nli.into()), Mode::Shared),
            (Lidirus, T5Style) => ("lidirus premise: {premise} hypothesis: {hypothesis}", LabelSet::Fixed(t5_nli.into()), Mode::Shared),
            (Terra, T5Style) => ("terra premise: {premise} hypothesis: {hypothesis}", LabelSet::Fixed(t5_nli.into()), Mode::Shared),
            (Rcb, RobertaStyle) => ("<s> {premise} </s></s> {hypothesis} </s>", LabelSet::Fixed(rcb.into()), Mode::Shared),
            (Rcb, BertStyle) => ("[CLS] {premise} [SEP] {hypothesis} [SEP]", LabelSet::Fixed(rcb.into()), Mode::Shared),
            (Rcb, T5Style) => ("rcb premise: {premise} hypothesis: {hypothesis}", LabelSet::Fixed(rcb.into()), Mode::Shared),
            (Parus, RobertaStyle) => ("<s> {premise} </s></s> {hypothesis} </s>", LabelSet::Fixed(binary.into()), Mode::PerChoice),
            (Parus, BertStyle) => ("[CLS] {premise} [SEP] {hypothesis} [SEP]", LabelSet::Fixed(binary.into()), Mode::PerChoice),
            (Parus, T5Style) => (
                "parus premise: {premise} hypothesis1: {choice1} hypothesis2: {choice2}",
                LabelSet::Fixed(vec!["hypothesis1", "hypothesis2"]),
                Mode::Shared,
            ),
            (Muserc, RobertaStyle) => ("<s> {passage} </s></s> {question} {answer} </s>", LabelSet::Fixed(binary.into()), Mode::Shared),
            (Muserc, BertStyle) => ("[CLS] {passage} [SEP] {question} {answer} [SEP]", LabelSet::Fixed(binary.into()), Mode::Shared),
            (Muserc, T5Style) => (
                "muserc question: {question} answer: {answer} text: {passage}",
                LabelSet::Fixed(yes_no.into()),
                Mode::Shared,
            ),
            (Russe, RobertaStyle) => (
                "<s> {sentence1} </s></s> {sentence2} </s></s> {word} </s>",
                LabelSet::Fixed(vec!["True", "False"]),
                Mode::Shared,
            ),
            (Russe, BertStyle) => ("[CLS] {sentence1} [SEP] {sentence2} [SEP]", LabelSet::Fixed(vec!["True", "False"]), Mode::Shared),
            (Russe, T5Style) => (
                "russe sentence1: {sentence1} sentence2: {sentence2} slovo: {word}",
                LabelSet::Fixed(yes_no.into()),
                Mode::Shared,
            ),
            (Rwsd, _) => ("False", LabelSet::Constant("False"), Mode::Constant),
            (Danetqa, RobertaStyle) => ("<s> {passage} </s></s> {question} </s>", LabelSet::Fixed(binary.into()), Mode::Shared),
            (Danetqa, BertStyle) => ("[CLS] {passage} [SEP] {question} [SEP]", LabelSet::Fixed(binary.into()), Mode::Shared),
            (Danetqa, T5Style) => ("danetqa question: {question} text: {passage}", LabelSet::Fixed(yes_no.into()), Mode::Shared),
            (Rucos, RobertaStyle) => (
                "<s> {passage} </s></s> {query.replace('@placeholder', entities[i])} </s>",
                LabelSet::Entities,
                Mode::PerEntity,
            ),
            (Rucos, BertStyle) => (
                "[CLS] {passage} [SEP] {query.replace('@placeholder', entities[i])} [SEP]",
                LabelSet::Entities,
                Mode::PerEntity,
            ),
            (Rucos, T5Style) => ("rucos question: {query} entities: {', '.join(entities)}", LabelSet::Entities, Mode::Shared),
        };
        TemplateSpec {
            task,
            family,
            pattern,
            labels,
            mode,
        }
    }

    /// Placeholder names in the pattern, in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.pattern;
        while let Some(open) = rest.find('{') {
            let close = open + rest[open..].find('}').expect("balanced pattern");
            out.push(&rest[open + 1..close]);
            rest = &rest[close + 1..];
        }
        out
    }

    /// Candidate labels for one instance.
    pub fn labels_for(&self, instance: &TaskInstance) -> Vec<String> {
        match &self.labels {
            LabelSet::Fixed(l) => l.iter().map(|s| s.to_string()).collect(),
            LabelSet::Entities => instance.entities.clone(),
            LabelSet::Constant(c) => vec![c.to_string()],
        }
    }

    pub fn render(&self, instance: &TaskInstance) -> Result<Rendering> {
        if instance.task != self.task {
            return Err(TemplateError::TaskMismatch {
                spec: self.task,
                instance: instance.task,
            });
        }
        for &field in self.task.required_fields() {
            if field != "entities" && !instance.fields.contains_key(field) {
                return Err(TemplateError::MissingField {
                    task: self.task,
                    field: field.to_string(),
                });
            }
        }
        let labels = self.labels_for(instance);
        Ok(match self.mode {
            Mode::Constant => Rendering::Constant(self.pattern.to_string()),
            Mode::Shared => Rendering::Shared {
                text: substitute(self.pattern, instance, None, None)?,
                labels,
            },
            Mode::PerChoice => {
                let mut out = Vec::with_capacity(labels.len());
                for (i, label) in labels.into_iter().enumerate() {
                    let key = format!("choice{}", i + 1);
                    let choice = instance.field(&key).ok_or_else(|| TemplateError::MissingField {
                        task: self.task,
                        field: key.clone(),
                    })?;
                    out.push((label, substitute(self.pattern, instance, Some(choice), None)?));
                }
                Rendering::PerLabel(out)
            }
            Mode::PerEntity => {
                let mut out = Vec::with_capacity(labels.len());
                for entity in labels {
                    let text = substitute(self.pattern, instance, None, Some(&entity))?;
                    out.push((entity, text));
                }
                Rendering::PerLabel(out)
            }
        })
    }
}

fn substitute(pattern: &str, inst: &TaskInstance, hypothesis: Option<&str>, entity: Option<&str>) -> Result<String> {
    let missing = |field: &str| TemplateError::MissingField {
        task: inst.task,
        field: field.to_string(),
    };
    let mut out = String::with_capacity(pattern.len() + 64);
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("balanced pattern");
        let name = &rest[open + 1..close];
        match name {
            REPLACE_EXPR => {
                let query = inst.field("query").ok_or_else(|| missing("query"))?;
                out.push_str(&query.replace("@placeholder", entity.unwrap_or("@placeholder")));
            }
            JOIN_EXPR => out.push_str(&inst.entities.join(", ")),
            "hypothesis" if hypothesis.is_some() => out.push_str(hypothesis.unwrap()),
            _ => out.push_str(inst.field(name).ok_or_else(|| missing(name))?),
        }
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rendering {
    /// One string per candidate label.
    PerLabel(Vec<(String, String)>),
    /// One string shared by all labels.
    Shared { text: String, labels: Vec<String> },
    /// Fixed prediction.
    Constant(String),
}

impl Rendering {
    /// `(label, rendered)` rows; shared renderings repeat the text per label.
    pub fn rows(&self) -> Vec<(String, String)> {
        match self {
            Rendering::PerLabel(v) => v.clone(),
            Rendering::Shared { text, labels } => labels.iter().map(|l| (l.clone(), text.clone())).collect(),
            Rendering::Constant(c) => vec![(c.clone(), c.clone())],
        }
    }

    /// `(label, string to score)`: shared renderings are scored as the text
    /// followed by a space and the label.
    pub fn scoring_candidates(&self) -> Vec<(String, String)> {
        match self {
            Rendering::PerLabel(v) => v.clone(),
            Rendering::Shared { text, labels } => labels.iter().map(|l| (l.clone(), format!("{text} {l}"))).collect(),
            Rendering::Constant(c) => vec![(c.clone(), c.clone())],
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.rows().into_iter().map(|(l, _)| l).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: Task,
    pub idx: String,
    /// String-valued keys; other scalars are kept in their JSON text form.
    pub fields: BTreeMap<String, String>,
    pub entities: Vec<String>,
    pub gold: Option<String>,
}

impl TaskInstance {
    pub fn new(task: Task, idx: impl Into<String>) -> Self {
        TaskInstance {
            task,
            idx: idx.into(),
            fields: BTreeMap::new(),
            entities: Vec::new(),
            gold: None,
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    /// Parses one JSON object. `idx`, `label` and `entities` are lifted out.
    pub fn from_json(task: Task, value: &Value, fallback_idx: usize) -> std::result::Result<Self, String> {
        let obj = value.as_object().ok_or("expected a JSON object")?;
        let mut inst = TaskInstance::new(task, fallback_idx.to_string());
        for (k, v) in obj {
            match (k.as_str(), v) {
                ("idx", v) => inst.idx = scalar_text(v),
                ("label", Value::Null) => {}
                ("label", v) => inst.gold = Some(scalar_text(v)),
                ("entities", Value::Array(items)) => {
                    for item in items {
                        match item {
                            Value::String(s) => inst.entities.push(s.clone()),
                            Value::Object(o) => match o.get("text").and_then(Value::as_str) {
                                Some(s) => inst.entities.push(s.to_string()),
                                None => return Err("entity objects need a `text` key".into()),
                            },
                            _ => return Err("entities must be strings".into()),
                        }
                    }
                }
                ("entities", _) => return Err("`entities` must be an array".into()),
                (k, v) => {
                    inst.fields.insert(k.to_string(), scalar_text(v));
                }
            }
        }
        for &field in task.required_fields() {
            let present = match field {
                "entities" => obj.contains_key("entities"),
                f => inst.fields.contains_key(f),
            };
            if !present {
                return Err(format!("missing required key `{field}`"));
            }
        }
        Ok(inst)
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Reads a JSON-lines file; blank lines are skipped.
pub fn load_instances(path: impl AsRef<Path>, task: Task) -> Result<Vec<TaskInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instances(&text, task)
}

pub fn parse_instances(text: &str, task: Task) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| TemplateError::Parse { line: i + 1, message };
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        out.push(TaskInstance::from_json(task, &value, out.len()).map_err(parse_err)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn danetqa() -> TaskInstance {
        TaskInstance::new(Task::Danetqa, "0").with("question", "Q").with("passage", "P")
    }

    #[test]
    fn danetqa_t5() {
        let r = TemplateSpec::builtin(Task::Danetqa, Family::T5Style).render(&danetqa()).unwrap();
        assert_eq!(
            r,
            Rendering::Shared {
                text: "danetqa question: Q text: P".into(),
                labels: vec!["no".into(), "yes".into()],
            }
        );
        assert_eq!(r.scoring_candidates()[1].1, "danetqa question: Q text: P yes");
    }

    #[test]
    fn terra_bert_pattern() {
        let spec = TemplateSpec::builtin(Task::Terra, Family::BertStyle);
        assert_eq!(spec.pattern, "[CLS] {premise} [SEP] {hypothesis} [SEP]");
        let inst = TaskInstance::new(Task::Terra, "1").with("premise", "A").with("hypothesis", "B");
        assert_eq!(spec.render(&inst).unwrap().rows()[0].1, "[CLS] A [SEP] B [SEP]");
    }

    #[test]
    fn rucos_substitutes_each_entity() {
        let mut inst = TaskInstance::new(Task::Rucos, "2")
            .with("passage", "P")
            .with("query", "@placeholder won");
        inst.entities = vec!["E1".into(), "E2".into()];
        let r = TemplateSpec::builtin(Task::Rucos, Family::BertStyle).render(&inst).unwrap();
        assert_eq!(
            r.rows(),
            vec![
                ("E1".to_string(), "[CLS] P [SEP] E1 won [SEP]".to_string()),
                ("E2".to_string(), "[CLS] P [SEP] E2 won [SEP]".to_string()),
            ]
        );
        let t5 = TemplateSpec::builtin(Task::Rucos, Family::T5Style).render(&inst).unwrap();
        assert_eq!(t5.rows()[0].1, "rucos question: @placeholder won entities: E1, E2");
    }

    #[test]
    fn parus_encoders_pair_premise_with_each_choice() {
        let inst = TaskInstance::new(Task::Parus, "3")
            .with("premise", "P")
            .with("choice1", "C1")
            .with("choice2", "C2");
        let r = TemplateSpec::builtin(Task::Parus, Family::RobertaStyle).render(&inst).unwrap();
        assert_eq!(
            r.rows(),
            vec![
                ("0".to_string(), "<s> P </s></s> C1 </s>".to_string()),
                ("1".to_string(), "<s> P </s></s> C2 </s>".to_string()),
            ]
        );
    }

    #[test]
    fn rwsd_is_constant() {
        for family in Family::ALL {
            let r = TemplateSpec::builtin(Task::Rwsd, family).render(&TaskInstance::new(Task::Rwsd, "0")).unwrap();
            assert_eq!(r, Rendering::Constant("False".into()));
        }
    }

    #[test]
    fn missing_field_is_named() {
        let inst = TaskInstance::new(Task::Danetqa, "0").with("question", "Q");
        let err = TemplateSpec::builtin(Task::Danetqa, Family::T5Style).render(&inst).unwrap_err();
        assert!(err.to_string().contains("passage"), "{err}");
    }

    #[test]
    fn placeholders_name_schema_fields() {
        for task in Task::ALL {
            for family in Family::ALL {
                let spec = TemplateSpec::builtin(task, family);
                for p in spec.placeholders() {
                    let ok = task.required_fields().contains(&p)
                        || p == REPLACE_EXPR
                        || p == JOIN_EXPR
                        || (task == Task::Parus && p == "hypothesis");
                    assert!(ok, "{task} {family}: {p}");
                }
                assert!(task == Task::Rwsd || spec.labels != LabelSet::Fixed(vec![]));
            }
        }
    }

    #[test]
    fn jsonl_parsing() {
        assert!(parse_instances("", Task::Terra).unwrap().is_empty());
        let one = parse_instances(
            r#"{"idx": 4, "premise": "A", "hypothesis": "B", "label": "entailment", "extra": true}"#,
            Task::Terra,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].idx, "4");
        assert_eq!(one[0].gold.as_deref(), Some("entailment"));
        assert_eq!(one[0].field("extra"), Some("true"));

        let text = "{\"premise\": \"A\", \"hypothesis\": \"B\"}\n{\"premise\": \"A\"}\n";
        match parse_instances(text, Task::Terra) {
            Err(TemplateError::Parse { line: 2, message }) => assert!(message.contains("hypothesis")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_instances("{oops", Task::Terra), Err(TemplateError::Parse { line: 1, .. })));
    }
}
