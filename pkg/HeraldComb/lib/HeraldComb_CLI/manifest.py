# HeraldComb: runs in a standard CPython 3.9+ environment.
"""Run manifests: what was run, with which configuration, and the hash of every artifact."""

import hashlib
import logging
import os

logger = logging.getLogger('HeraldComb.CLI')

MANIFEST_NAME = "manifest.txt"
_HASH_BLOCK = 1 << 20


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(_HASH_BLOCK), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(output_dir, command, config, counts=None, artifacts=()):
    """Write ``manifest.txt`` into ``output_dir`` as sorted key=value lines.

    Args:
        output_dir (str): Directory of the run.
        command (str): Command or preset name.
        config (RunConfig): Resolved configuration.
        counts (dict, optional): Event counts to record.
        artifacts (Iterable[str]): Paths of the files the command wrote.

    Returns:
        dict: artifact file name -> sha256.
    """
    hashes = {os.path.relpath(path, output_dir): file_sha256(path) for path in artifacts}
    lines = [
        "command={}".format(command),
        "config_sha256={}".format(config.config_hash()),
        "seed={}".format(config.run.seed),
    ]
    lines.extend("count.{}={}".format(key, value) for key, value in sorted((counts or {}).items()))
    lines.extend("artifact.{}.sha256={}".format(name, digest) for name, digest in sorted(hashes.items()))
    path = os.path.join(output_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.info("Manifest written to %s (%d artifacts).", path, len(hashes))
    return hashes


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        return dict(line.rstrip("\n").split("=", 1) for line in f if "=" in line)
