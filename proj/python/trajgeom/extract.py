"""Extractor interface: prompt suite in, trajectory bundle out.

Running a language model is not part of this package. The job description,
the vocabulary check and the command line are here so a backend (for
example one built on ``transformers``) can plug in and write bundles with
:func:`trajgeom.write_bundle`.
"""

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path


class VocabularyError(ValueError):
    def __init__(self, violators):
        self.violators = list(violators)
        super().__init__("words that are not a single token: " + ", ".join(self.violators))


@dataclass
class ExtractionJob:
    model: str
    suite: Path
    out: Path
    layers: list = field(default_factory=list)  # empty: every block output
    tracked_token_ids: list = field(default_factory=list)
    batch_size: int = 1
    device: str = "cpu"


def verify_vocabulary(words, tokenizer, prefix=" "):
    """Map each word to its single token id, or raise VocabularyError.

    ``tokenizer.encode(text, add_special_tokens=False)`` must return ids.
    Words are encoded as they appear mid-prompt, after ``prefix``.
    """
    ids = {}
    bad = []
    for w in words:
        toks = tokenizer.encode(prefix + w, add_special_tokens=False)
        if len(toks) == 1:
            ids[w] = toks[0]
        else:
            bad.append(w)
    if bad:
        raise VocabularyError(bad)
    return ids


def extract(job):
    raise NotImplementedError(
        "no model backend installed; write bundles with trajgeom.write_bundle")


def generate_answers(job, max_new_tokens):
    if max_new_tokens == 0:
        return {}
    raise NotImplementedError("no model backend installed")


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m trajgeom.extract")
    p.add_argument("--model", required=True)
    p.add_argument("--suite", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--layers", type=int, nargs="*", default=[])
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--device", default="cpu")
    a = p.parse_args(argv)
    job = ExtractionJob(a.model, a.suite, a.out, a.layers, [], a.batch_size, a.device)
    try:
        extract(job)
    except NotImplementedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
