use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::domain::{Question, Strategy, TaskKind, Vocab};

/// One line of an exported question set. Token strings are space-separated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: u64,
    pub task: TaskKind,
    pub prompt: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_sequence: Option<Vec<usize>>,
}

impl QuestionRecord {
    pub fn from_question(q: &Question, vocab: &Vocab) -> Result<QuestionRecord, EnvError> {
        let dec = |ids: &[usize]| vocab.decode(ids).map_err(|e| EnvError::InvalidSpec(e.to_string()));
        let body = match q.prompt_tokens.first() {
            Some(&t) if t == vocab.bos => &q.prompt_tokens[1..],
            _ => &q.prompt_tokens[..],
        };
        Ok(QuestionRecord {
            id: q.id,
            task: q.task,
            prompt: dec(body)?,
            ground_truth: dec(&q.ground_truth)?,
            lock_sequence: q.lock_sequence.as_ref().map(|l| l.iter().map(|s| s.id()).collect()),
        })
    }

    pub fn to_question(&self, vocab: &Vocab) -> Result<Question, String> {
        let mut prompt = vec![vocab.bos];
        prompt.extend(vocab.encode(&self.prompt).map_err(|e| e.to_string())?);
        let lock = match &self.lock_sequence {
            None => None,
            Some(ids) => Some(
                ids.iter()
                    .map(|&i| Strategy::from_id(i).ok_or_else(|| format!("unknown strategy id {i}")))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(Question {
            id: self.id,
            task: self.task,
            prompt_tokens: prompt,
            ground_truth: vocab.encode(&self.ground_truth).map_err(|e| e.to_string())?,
            lock_sequence: lock,
        })
    }
}

pub fn write_questions_jsonl<W: Write>(questions: &[Question], vocab: &Vocab, mut out: W) -> std::io::Result<()> {
    for q in questions {
        let rec = QuestionRecord::from_question(q, vocab)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_questions_jsonl<R: BufRead>(input: R, vocab: &Vocab) -> Result<Vec<Question>, EnvError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let parse = |message: String| EnvError::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        out.push(rec.to_question(vocab).map_err(parse)?);
    }
    Ok(out)
}
