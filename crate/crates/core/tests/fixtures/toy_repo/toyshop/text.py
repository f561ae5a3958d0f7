import re


def normalize_spaces(text):
    return re.sub(r"\s+", " ", text).strip()


def slugify(text):
    """Lowercase `text`, collapse whitespace, and join words with hyphens."""
    raise NotImplementedError
