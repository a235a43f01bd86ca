"""Shared fixtures: a small knowledge-base corpus and annotated questions."""

from __future__ import annotations

import pytest

from entityrag.annotations import AnnotatedQuestion, EntitySpan
from entityrag.corpus import CorpusStore, build_offset_index, write_dump

SEINE_TITLE = "Seine-Saint-Denis"

# First 100 words of the department's article; the answer to the capital
# question ("Bobigny") sits inside this window.
SEINE_BODY_100 = (
    "Seine-Saint-Denis In 2019, it had a population of 1,644,903 across 40 "
    "communes. In French, the learned but rarely used demonym for the "
    "inhabitants of Seine-Saint-Denis is ; more common is . The department "
    "is surrounded by the departments of Hauts-de-Seine, Val-de-Marne, "
    "Paris, Val-d'Oise, and Seine-et-Marne. It is thus the only one of the "
    "five French departments surrounded entirely by other departments of "
    "the same region. Image:Petite couronne.png The most populous commune "
    "is Saint-Denis; the prefecture Bobigny is the eleventh-most populous. "
    "As of 2019, there are 5 communes with more than 70,000 inhabitants: is "
    "made up of three departmental and 40"
)

# Continuation past the 100-word window so truncation actually cuts.
SEINE_BODY = (
    SEINE_BODY_100
    + " communal territories administered from the prefecture building, and "
    "the department forms part of the inner ring around the capital."
)

SWAN_TITLE = "Swan Lake"
SWAN_BODY = (
    "Swan Lake Swan Lake is a ballet composed by Russian composer Pyotr "
    "Ilyich Tchaikovsky in 1875 and 1876. The scenario presents the story "
    "of Odette, a princess turned into a swan by an evil sorcerer's curse. "
    "Despite its initial reception, the ballet became one of the most "
    "popular works in the repertoire."
)

EXTRA_ARTICLES = [
    ("Bobigny", "Bobigny is the prefecture of its department and lies northeast of Paris on the banks of the canal."),
    ("Paris", "Paris is the capital and most populous city of France, on the river Seine."),
    ("Joan Collins", "Joan Collins is an English actress known for playing Alexis Colby in a long running television drama."),
]


def seine_question() -> AnnotatedQuestion:
    text = "What is the capital of Seine-Saint-Denis?"
    begin = text.index(SEINE_TITLE)
    return AnnotatedQuestion(
        question_id="seine-1",
        text=text,
        answers=["Bobigny"],
        spans=[EntitySpan(begin, begin + len(SEINE_TITLE), SEINE_TITLE)],
    )


def swan_question() -> AnnotatedQuestion:
    text = "Who is the composer of The Swan Lake ballet?"
    begin = text.index(SWAN_TITLE)
    return AnnotatedQuestion(
        question_id="swan-1",
        text=text,
        answers=["Tchaikovsky"],
        spans=[EntitySpan(begin, begin + len(SWAN_TITLE), SWAN_TITLE)],
    )


@pytest.fixture
def mini_dump(tmp_path):
    dump_path = tmp_path / "articles.dump"
    records = [(SEINE_TITLE, SEINE_BODY), (SWAN_TITLE, SWAN_BODY)] + EXTRA_ARTICLES
    write_dump(records, dump_path)
    build_offset_index(dump_path)
    return dump_path


@pytest.fixture
def mini_store(mini_dump):
    with CorpusStore(mini_dump) as store:
        yield store
