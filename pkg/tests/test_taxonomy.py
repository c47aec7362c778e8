import pytest
from hypothesis import given
from hypothesis import strategies as st

from fallacylab.errors import ExcludedClass, UnknownClass
from fallacylab.taxonomy import BINARY_CLASSES, FallacyTaxonomy

# the thirteen experiment classes and their coarse parents
TABLE_1 = {
    "Ad Hominem": "Fallacy of Relevance",
    "Ad Populum": "Fallacy of Relevance",
    "Appeal to Emotion": "Fallacy of Relevance",
    "Fallacy of Extension": "Fallacy of Relevance",
    "Fallacy of Relevance": "Fallacy of Relevance",
    "Intentional": "Fallacy of Relevance",
    "False Causality": "Fallacy of Defective Induction",
    "False Dilemma": "Fallacy of Defective Induction",
    "Faulty Generalization": "Fallacy of Defective Induction",
    "Fallacy of Credibility": "Fallacy of Defective Induction",
    "Fallacy of Logic": "Fallacy of Defective Induction",
    "Circular Reasoning": "Fallacy of Presumption",
    "Equivocation": "Fallacy of Ambiguity",
}

COARSE_EXCLUDED = {"Fallacy of Relevance", "Fallacy of Logic", "Intentional"}


def test_thirteen_experiment_classes(taxonomy):
    assert sorted(taxonomy.fine_experiment_classes()) == sorted(TABLE_1)


def test_every_fine_class_has_its_table_parent(taxonomy):
    for fine, coarse in TABLE_1.items():
        assert taxonomy.coarse_parent(fine) == coarse


def test_mappable_classes_map(taxonomy):
    for fine, coarse in TABLE_1.items():
        if fine in COARSE_EXCLUDED:
            continue
        assert taxonomy.map_fine_to_coarse(fine) == coarse


def test_excluded_classes_raise(taxonomy):
    for fine in COARSE_EXCLUDED:
        with pytest.raises(ExcludedClass):
            taxonomy.map_fine_to_coarse(fine)


def test_unknown_class_raises(taxonomy):
    with pytest.raises(UnknownClass):
        taxonomy.map_fine_to_coarse("Slippery Slope")


def test_coarse_order_is_alphabetical(taxonomy):
    assert taxonomy.coarse_experiment_classes() == [
        "Fallacy of Ambiguity",
        "Fallacy of Defective Induction",
        "Fallacy of Presumption",
        "Fallacy of Relevance",
    ]
    assert taxonomy.label_index("coarse", "Fallacy of Ambiguity") == 0


def test_label_roundtrip(taxonomy):
    for granularity in ("binary", "coarse", "fine"):
        space = taxonomy.label_space(granularity)
        for i, name in enumerate(space):
            assert taxonomy.label_index(granularity, name) == i


def test_binary_space(taxonomy):
    assert taxonomy.label_space("binary") == list(BINARY_CLASSES)


def test_fine_and_coarse_relevance_are_distinct(taxonomy):
    granularities = {
        (c.name, c.granularity)
        for c in taxonomy.fine_classes | taxonomy.coarse_classes
        if c.name == "Fallacy of Relevance"
    }
    assert granularities == {("Fallacy of Relevance", "fine"), ("Fallacy of Relevance", "coarse")}


def test_dotted_classes_present_but_not_in_experiments(taxonomy):
    excluded = {c.name for c in taxonomy.fine_classes if not c.included_in_experiments}
    assert "Begging the Question" in excluded
    assert "Amphiboly" in excluded
    assert excluded.isdisjoint(taxonomy.fine_experiment_classes())


@given(st.sampled_from(sorted(set(TABLE_1) - COARSE_EXCLUDED)))
def test_mapping_is_pure(fine):
    taxonomy = FallacyTaxonomy.load()
    assert taxonomy.map_fine_to_coarse(fine) == taxonomy.map_fine_to_coarse(fine)
