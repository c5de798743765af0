use crate::error::{LabError, Result};
use crate::stimgen::Lexicon;

/// Rewrites a matrix question `What did SUBJ V1 COMPL and V2 ?` (verbs in
/// base form) as the embedded clause `I know what SUBJ V1ed COMPL and V2ed`.
pub fn convert_matrix_to_embedded(question: &[&str], lex: &Lexicon) -> Result<Vec<String>> {
    let schema = || LabError::Schema(format!("{:?} is not a matrix wh-question", question.join(" ")));
    let n = question.len();
    if n < 7 || question[0] != "What" || question[1] != "did" || question[n - 1] != "?" {
        return Err(schema());
    }
    let body = &question[2..n - 1];
    let and = body.iter().position(|w| *w == lex.conjunction).ok_or_else(schema)?;
    // subject, v1, at least one complement token, then `and v2 ...`
    if and < 3 || and + 1 >= body.len() {
        return Err(schema());
    }
    let subject = body[0];
    let v1 = lex.past(body[1])?;
    let complement = &body[2..and];
    let v2 = lex.past(body[and + 1])?;
    let mut out = vec!["I".to_string(), "know".to_string(), lex.wh_licensor.clone(), subject.to_string(), v1.to_string()];
    out.extend(complement.iter().map(|w| w.to_string()));
    out.push(lex.conjunction.clone());
    out.push(v2.to_string());
    out.extend(body[and + 2..].iter().map(|w| w.to_string()));
    Ok(out)
}
