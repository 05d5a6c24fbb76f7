"""Smoke tests for the python bindings."""

import json
import math
import os

import pytest

import veritree


def test_tokenize():
    assert veritree.tokenize("Report says #shooting!") == [
        "report",
        "says",
        "#shooting",
        "!",
    ]
    assert veritree.tokenize("") == []


def test_credibility_defaults():
    full = veritree.ReviewerMeta(
        verified=True,
        geo=True,
        screen_name=True,
        profile_image=True,
        followers=600,
        friends=250,
        favourites=250,
    )
    assert veritree.reviewer_credibility(full) == pytest.approx(1.0, abs=1e-12)
    assert veritree.reviewer_credibility(veritree.ReviewerMeta()) == pytest.approx(
        5.0 / 29.0, abs=1e-12
    )

    best = veritree.CommentMeta(
        geo=True, source=True, favorited=True, favorite_count=150, content_length=20
    )
    assert veritree.comment_credibility(best) == pytest.approx(1.0, abs=1e-12)


def test_decide():
    th = veritree.DecisionThresholds(0.0, 0.5, 0.6, 0.55)
    selected, fired = veritree.decide(0.47, 0.66, 0.71, th)
    assert selected
    assert fired == ["simi", "r_cred", "c_cred"]

    selected, fired = veritree.decide(0.9, 0.1, 0.1, th)
    assert not selected
    assert fired == []

    with pytest.raises(ValueError):
        veritree.DecisionThresholds(0.9, 0.1, 0.0, 0.0)


def test_parse_and_select():
    doc = {
        "claim": {
            "id": "t1",
            "text": "museum closed after incident",
            "label": "false",
            "user": {"verified": True, "followers_count": 600},
        },
        "comments": [
            {
                "id": "c1",
                "parent_id": "t1",
                "text": "museum closed confirmed by staff on site",
                "user": {
                    "verified": True,
                    "geo": True,
                    "screen_name": True,
                    "profile_image": True,
                    "followers_count": 900,
                    "friends_count": 300,
                    "favourites_count": 300,
                },
                "meta": {
                    "geo": True,
                    "source": True,
                    "favorited": True,
                    "favorite_count": 150,
                },
            },
            {
                "id": "c2",
                "parent_id": "c1",
                "text": "lol",
                "user": {},
                "meta": {},
            },
        ],
    }
    thread, warnings = veritree.parse_thread(json.dumps(doc))
    assert warnings == []
    assert thread.claim_id == "t1"
    assert thread.label == "false"
    assert thread.comment_count == 2

    scorer = veritree.Scorer(dim=16, seed=3)
    scores = scorer.score_comments(thread)
    assert [s["id"] for s in scores] == ["c1", "c2"]
    for s in scores:
        for key in ("simi", "r_cred", "c_cred"):
            assert 0.0 <= s[key] <= 1.0
    assert scores[0]["r_cred"] == pytest.approx(1.0)

    # c1 passes on credibility; c2 has bottom-bracket metadata.
    sel = scorer.select_evidence(
        thread, veritree.DecisionThresholds(0.0, 0.0, 0.9, 0.9), max_tokens=32
    )
    assert [s["id"] for s in sel["selected"]] == ["c1"]
    assert sel["evidence_tokens"][0] == "museum"

    # Round trip through the serializer.
    again, _ = veritree.parse_thread(veritree.serialize_thread(thread))
    assert again.comment_count == 2

    with pytest.raises(ValueError):
        veritree.parse_thread("{broken")


def test_cli_roundtrip(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    veritree.make_planted_corpus_file(str(corpus), threads=8, seed=5)
    out = tmp_path / "ev.jsonl"

    rc = veritree.run_cli(
        [
            "select",
            "--corpus",
            str(corpus),
            "--simi-high",
            "0.6",
            "--rcred",
            "0.5",
            "--ccred",
            "0.5",
            "--seed",
            "13",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 8
    for line in lines:
        doc = json.loads(line)
        assert doc["selected"], "planted echo comments must be selected"

    # Usage error: missing --corpus.
    assert veritree.run_cli(["select"]) == 1
    # Data error: absent file.
    assert veritree.run_cli(["select", "--corpus", str(tmp_path / "nope.jsonl")]) == 2
