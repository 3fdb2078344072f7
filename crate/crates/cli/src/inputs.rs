use neurontrace::{Error, Result};

/// Test-input selector given to `trace --inputs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    Rows(Vec<usize>),
    Label(usize),
    AllCorrect,
    AllWrong,
}

impl InputSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |m: String| Error::config_field("inputs", m);
        match s.trim() {
            "all-correct" => Ok(InputSpec::AllCorrect),
            "all-wrong" => Ok(InputSpec::AllWrong),
            t if t.starts_with("label=") => {
                t["label=".len()..].parse().map(InputSpec::Label).map_err(|_| bad(format!("bad label in `{t}`")))
            }
            t => {
                let rows = t
                    .split(',')
                    .map(|p| p.trim().parse::<usize>().map_err(|_| bad(format!("`{p}` is not a test row index"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InputSpec::Rows(rows))
            }
        }
    }
}
