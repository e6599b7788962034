use crate::error::{Error, Result};

/// Tag every token between the first and the last positive of a sentence.
pub fn postprocess_fill(tags: &[u8]) -> Result<Vec<u8>> {
    if let Some(bad) = tags.iter().find(|&&t| t > 1) {
        return Err(Error::contract(format!("postprocess_fill: non-binary tag {bad}")));
    }
    let mut out = tags.to_vec();
    if let (Some(first), Some(last)) = (tags.iter().position(|&t| t == 1), tags.iter().rposition(|&t| t == 1)) {
        out[first..=last].fill(1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_between_outer_positives() {
        assert_eq!(postprocess_fill(&[0, 1, 0, 0, 1, 0]).unwrap(), vec![0, 1, 1, 1, 1, 0]);
        assert_eq!(postprocess_fill(&[0, 0, 0]).unwrap(), vec![0, 0, 0]);
        assert_eq!(postprocess_fill(&[1, 1, 1]).unwrap(), vec![1, 1, 1]);
        assert!(postprocess_fill(&[]).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_binary() {
        assert!(postprocess_fill(&[0, 2]).is_err());
    }
}
