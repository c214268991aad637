use capweight::formats::{
    read_jsonl, read_logprob_dump, write_jsonl, write_logprob_dump, SidecarRecord, TokenDumpRecord,
};
use capweight::{
    compute_weights, select_threshold, Caption, ConfidenceSeries, Error, GreedyTokenizer,
    Population, ScoreKind, SpanTokenizer, WithSpecials,
};

#[test]
fn token_dump_round_trip() {
    let tok = WithSpecials::new(
        GreedyTokenizer::new("g", ["a", "ab", "c", "é", ","]).unwrap(),
        Some(0),
        Some(1),
    );
    let t = tok.tokenize(&Caption::new("x", "abc é, a")).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, [&TokenDumpRecord::from_tokenization(&t)]).unwrap();
    let back: Vec<(usize, TokenDumpRecord)> = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back[0].1.to_tokenization(1).unwrap(), t);

    let mut rec = back[0].1.clone();
    rec.text = None;
    assert_eq!(rec.to_tokenization(1).unwrap(), t);
}

#[test]
fn logprob_dump_reports_line_numbers() {
    let body = "\n{\"caption_id\":\"a\",\"tokenizer\":\"w\",\"with_image\":[0.1],\"text_only\":[0.2]}\n\
                {\"caption_id\":\"b\",\"tokenizer\":\"w\",\"with_image\":[0.1,null],\"text_only\":[0.2,0.3]}\n";
    match read_logprob_dump(body.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let first: String = body.lines().take(2).collect::<Vec<_>>().join("\n");
    let recs = read_logprob_dump(first.as_bytes()).unwrap();
    assert_eq!(recs.len(), 1);
    let mut out = Vec::new();
    write_logprob_dump(&mut out, &recs).unwrap();
    assert_eq!(read_logprob_dump(out.as_slice()).unwrap(), recs);
}

#[test]
fn sidecar_schema_is_stable() {
    let s = ConfidenceSeries::new("c", ScoreKind::TextOnly, vec![Some(0.25), None, Some(0.75)])
        .unwrap();
    let t = select_threshold(&[0.25, 0.75], 0.5, Population::Corpus, ScoreKind::TextOnly).unwrap();
    let rec = SidecarRecord::new("w", &t, &compute_weights(&s, &t));
    assert_eq!(
        serde_json::to_string(&rec).unwrap(),
        r#"{"caption_id":"c","tokenizer":"w","sigma":0.5,"epsilon":0.25,"score_kind":"text_only","weights":[1.0,1.0,-1.0],"flagged":[2]}"#
    );
}
