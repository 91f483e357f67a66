import numpy as np
import pytest

from docvae.data import GeneratorConfig, sample_documents
from docvae.document import AttributeSpec, Document, DocumentSchema, length_to_bin
from docvae.schemas import crello_like_schema, rico_like_schema

# small feature dimension keeps model tests fast without changing any logic
SMALL_FEATURE_DIM = 8


@pytest.fixture(scope="session")
def small_crello_schema():
    return crello_like_schema(feature_dim=SMALL_FEATURE_DIM)


@pytest.fixture(scope="session")
def rico_schema():
    return rico_like_schema()


@pytest.fixture(scope="session")
def small_generator_config():
    return GeneratorConfig(family="crello-like", n_documents=60, feature_dim=SMALL_FEATURE_DIM)


@pytest.fixture(scope="session")
def crello_docs(small_generator_config):
    return sample_documents(small_generator_config, seed=11, n=60)


@pytest.fixture(scope="session")
def rico_docs():
    config = GeneratorConfig(family="rico-like", n_documents=40)
    return sample_documents(config, seed=5, n=40)


@pytest.fixture(scope="session")
def micro_schema():
    """Tiny schema for gradient checks and fast model tests."""
    canvas = (
        AttributeSpec("length", "canvas", "categorical", cardinality=6),
        AttributeSpec("style", "canvas", "categorical", cardinality=3),
    )
    elements = (
        AttributeSpec("kind", "element", "categorical", cardinality=3),
        AttributeSpec("position", "element", "categorical", cardinality=4, dims=2),
        AttributeSpec("feat", "element", "numerical", dims=3, applicable_types=frozenset({0, 1})),
    )
    return DocumentSchema(
        name="micro", canvas_attrs=canvas, element_attrs=elements, max_length=6, label_attr="kind"
    )


def sample_micro_documents(seed, n, max_length=6):
    rng = np.random.default_rng(seed)
    docs = []
    for _ in range(n):
        length = int(rng.integers(1, max_length + 1))
        elements = []
        for _ in range(length):
            kind = int(rng.integers(3))
            element = {"kind": (kind,), "position": (int(rng.integers(4)), int(rng.integers(4)))}
            if kind in (0, 1):
                element["feat"] = tuple(float(v) for v in rng.standard_normal(3))
            elements.append(element)
        docs.append(
            Document(
                canvas={"length": (length_to_bin(length),), "style": (int(rng.integers(3)),)},
                elements=tuple(elements),
            )
        )
    return docs


@pytest.fixture(scope="session")
def micro_docs():
    return sample_micro_documents(seed=42, n=24)
