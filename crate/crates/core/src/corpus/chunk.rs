use super::Document;
use crate::error::{Error, Result};

/// Splits a document into contiguous, non-overlapping chunks of
/// `chunk_size` tokens; only the last chunk may be shorter.
pub fn chunk(doc: &Document, chunk_size: usize) -> Result<Vec<Vec<u32>>> {
    if chunk_size == 0 {
        return Err(Error::InvalidConfig("chunk_size must be >= 1".into()));
    }
    if doc.tokens.is_empty() {
        return Err(Error::EmptyDocument(doc.id.clone()));
    }
    Ok(doc.tokens.chunks(chunk_size).map(<[u32]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Target;
    use proptest::prelude::*;

    fn doc(len: usize) -> Document {
        Document {
            id: "d".into(),
            tokens: (0..len as u32).collect(),
            label: Target::Index(0),
        }
    }

    #[test]
    fn chunk_lengths() {
        let lens = |n| -> Vec<usize> { chunk(&doc(n), 512).unwrap().iter().map(Vec::len).collect() };
        assert_eq!(lens(1037), vec![512, 512, 13]);
        assert_eq!(lens(512), vec![512]);
        assert_eq!(lens(1), vec![1]);
    }

    #[test]
    fn empty_document_rejected() {
        assert!(matches!(chunk(&doc(0), 8), Err(Error::EmptyDocument(_))));
        assert!(chunk(&doc(3), 0).is_err());
    }

    proptest! {
        #[test]
        fn chunks_concatenate_to_tokens(
            tokens in proptest::collection::vec(any::<u32>(), 1..300),
            size in 1usize..64,
        ) {
            let d = Document { id: "p".into(), tokens: tokens.clone(), label: Target::Index(0) };
            let chunks = chunk(&d, size).unwrap();
            prop_assert!(chunks[..chunks.len() - 1].iter().all(|c| c.len() == size));
            prop_assert!(!chunks.last().unwrap().is_empty());
            prop_assert_eq!(chunks.concat(), tokens);
        }
    }
}
