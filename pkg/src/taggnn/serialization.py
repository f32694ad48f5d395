"""Model directory format: a JSON manifest plus one packed binary blob.

``manifest.json`` records dimensions, the variant flags, a vocabulary hash
and the tensor table (name, shape, byte offset); ``params.bin`` holds every
tensor as row-major little-endian float64 in manifest order.  ``vocab.json``
carries the token list so a saved model can be applied to freshly loaded
data.
"""

import json
import os

import numpy as np

from .autodiff import Tensor
from .graph import EmbeddingTable, Vocabulary
from .model import LayerParams, ModelVariant, TagGNNModel

FORMAT = "taggnn-model-v1"


def _named_tensors(model):
    pairs = [("embeddings.words", model.embeddings.words),
             ("embeddings.tag_ids", model.embeddings.tag_ids)]
    for n, layer in enumerate(model.layers):
        pairs += [(f"layers.{n}.attn_proj", layer.attn_proj),
                  (f"layers.{n}.attn_context", layer.attn_context)]
        if model.variant.heterogeneous:
            pairs += [(f"layers.{n}.update_query", layer.update_query),
                      (f"layers.{n}.update_item", layer.update_item),
                      (f"layers.{n}.update_tag", layer.update_tag)]
        else:
            pairs.append((f"layers.{n}.update_shared", layer.update_query))
        pairs += [(f"layers.{n}.gate_new", layer.gate_new),
                  (f"layers.{n}.gate_old", layer.gate_old),
                  (f"layers.{n}.gate_bias", layer.gate_bias)]
    if model.head_weight is not None:
        pairs += [("head.weight", model.head_weight), ("head.bias", model.head_bias)]
    return pairs


def save_model(model, vocab, directory, tag_ids, meta=None):
    os.makedirs(directory, exist_ok=True)
    tensors, offset = [], 0
    blob = bytearray()
    for name, tensor in _named_tensors(model):
        raw = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(tensor.data.shape), "offset": offset})
        blob.extend(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT,
        "dim": model.dim,
        "gamma": model.gamma,
        "variant": {
            "kind": model.variant.kind,
            "heterogeneous": model.variant.heterogeneous,
            "use_tag_names": model.variant.use_tag_names,
            "use_tag_ids": model.variant.use_tag_ids,
            "n_layers": model.variant.n_layers,
        },
        "n_words": model.embeddings.words.data.shape[0],
        "n_tags": model.embeddings.tag_ids.data.shape[0],
        "tags": list(tag_ids),
        "vocab_sha256": vocab.sha256(),
        "meta": dict(meta or {}),
        "tensors": tensors,
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        fh.write(bytes(blob))
    with open(os.path.join(directory, "vocab.json"), "w", encoding="utf-8") as fh:
        json.dump({"tokens": vocab.id_to_token[1:], "min_count": vocab.min_count}, fh)
        fh.write("\n")


def load_model(directory):
    """Rebuild (model, vocab, manifest) from a model directory."""
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ValueError(f"unsupported model format {manifest.get('format')!r}")
    with open(os.path.join(directory, "vocab.json"), encoding="utf-8") as fh:
        vdata = json.load(fh)
    vocab = Vocabulary(vdata["tokens"], min_count=vdata["min_count"])
    if vocab.sha256() != manifest["vocab_sha256"]:
        raise ValueError("vocabulary hash mismatch; model directory is inconsistent")

    with open(os.path.join(directory, "params.bin"), "rb") as fh:
        blob = fh.read()
    arrays = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)

    v = manifest["variant"]
    variant = ModelVariant(kind=v["kind"], heterogeneous=v["heterogeneous"],
                           use_tag_names=v["use_tag_names"], use_tag_ids=v["use_tag_ids"],
                           n_layers=v["n_layers"])
    dim = manifest["dim"]
    embeddings = EmbeddingTable(
        words=Tensor(arrays["embeddings.words"], requires_grad=True),
        tag_ids=Tensor(arrays["embeddings.tag_ids"], requires_grad=True),
        dim=dim,
    )
    layers = []
    for n in range(variant.n_layers):
        if variant.heterogeneous:
            uq = Tensor(arrays[f"layers.{n}.update_query"], requires_grad=True)
            ui = Tensor(arrays[f"layers.{n}.update_item"], requires_grad=True)
            ut = Tensor(arrays[f"layers.{n}.update_tag"], requires_grad=True)
        else:
            uq = ui = ut = Tensor(arrays[f"layers.{n}.update_shared"], requires_grad=True)
        layers.append(LayerParams(
            attn_proj=Tensor(arrays[f"layers.{n}.attn_proj"], requires_grad=True),
            attn_context=Tensor(arrays[f"layers.{n}.attn_context"], requires_grad=True),
            update_query=uq, update_item=ui, update_tag=ut,
            gate_new=Tensor(arrays[f"layers.{n}.gate_new"], requires_grad=True),
            gate_old=Tensor(arrays[f"layers.{n}.gate_old"], requires_grad=True),
            gate_bias=Tensor(arrays[f"layers.{n}.gate_bias"], requires_grad=True),
        ))
    head_w = head_b = None
    if variant.needs_head:
        head_w = Tensor(arrays["head.weight"], requires_grad=True)
        head_b = Tensor(arrays["head.bias"], requires_grad=True)
    model = TagGNNModel(embeddings, layers, variant, gamma=manifest["gamma"],
                        head_weight=head_w, head_bias=head_b)
    return model, vocab, manifest
