"""Command-line surface: train, enhance, evaluate, mix.

Exit codes: 0 success, 2 usage error, 3 malformed/unsupported WAV,
4 model/checkpoint problem, 1 anything else. The environment variable
``ARN_SEED`` overrides the default seed 0.

``evaluate`` reads a manifest of ``<clean path>\\t<degraded-or-enhanced
path>`` lines and prints one tab-separated record per pair
(``clean  other  snr_db  si_snr_db``) followed by a ``mean`` line; with
``--model`` the second file of each pair is enhanced before scoring.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import losses, mixing, model, training, wavio
from .mixing import CorpusIndex, DynamicMixer, MixtureRecipe
from .model import ARNConfig, ConfigurationError
from .training import CheckpointError, TrainConfig
from .wavio import WavFormatError

EXIT_USAGE = 2
EXIT_WAV = 3
EXIT_MODEL = 4


def _seed() -> int:
    return int(os.environ.get("ARN_SEED", "0"))


def _load_model(ckpt_path):
    ckpt = training.load_checkpoint(ckpt_path)
    params = training.params_from_checkpoint(ckpt, dtype=np.float32)
    return params, ckpt.model_cfg, ckpt.v_cache


def _enhance_signal(x: np.ndarray, params, cfg, v_cache) -> np.ndarray:
    # the model is trained on unit-RMS mixtures: normalize in, scale back out
    r = mixing.rms(x)
    if r == 0.0:
        return np.zeros_like(x)
    y = model.enhance(x * (1.0 / r), params, cfg, v_cache)
    return y * r


def cmd_enhance(args) -> int:
    params, cfg, v_cache = _load_model(args.model)
    src = Path(args.input)
    dst = Path(args.output)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        pairs = [(p, dst / p.name) for p in sorted(src.glob("*.wav"))]
    else:
        pairs = [(src, dst)]
    encoding = "pcm16" if args.pcm16 else "float32"
    for in_path, out_path in pairs:
        wav = wavio.read_wav(in_path)
        enhanced = _enhance_signal(wav.samples, params, cfg, v_cache)
        wavio.write_wav(out_path, enhanced, encoding=encoding)
    return 0


def cmd_evaluate(args) -> int:
    enhancer = None
    if args.model:
        params, cfg, v_cache = _load_model(args.model)
        enhancer = lambda x: _enhance_signal(x, params, cfg, v_cache)
    manifest = Path(args.pairs).read_text().splitlines()
    snrs, sis = [], []
    for line in manifest:
        line = line.strip()
        if not line:
            continue
        clean_path, other_path = line.split("\t")
        clean = wavio.read_wav(clean_path).samples
        other = wavio.read_wav(other_path).samples
        if enhancer is not None:
            other = enhancer(other)
        pair_snr = losses.snr(clean, other)
        pair_si = losses.si_snr(clean, other)
        snrs.append(pair_snr)
        sis.append(pair_si)
        print(f"{clean_path}\t{other_path}\t{pair_snr:.3f}\t{pair_si:.3f}")
    if not snrs:
        print("mean\t0\tnan\tnan")
        return 0
    print(f"mean\t{len(snrs)}\t{np.mean(snrs):.3f}\t{np.mean(sis):.3f}")
    return 0


def cmd_mix(args) -> int:
    speech = wavio.read_wav(args.speech).samples
    noise = wavio.read_wav(args.noise).samples
    target_len = min(speech.size, noise.size, mixing.CHUNK_LEN)
    recipe = MixtureRecipe(
        speech_id=os.fspath(args.speech), noise_id=os.fspath(args.noise),
        speech_offset=0, noise_offset=0, snr_db=args.snr, seed=_seed())
    x, s = mixing.make_mixture(recipe, speech[:target_len], noise, target_len)
    wavio.write_wav(f"{args.out}.noisy.wav", x)
    wavio.write_wav(f"{args.out}.clean.wav", s)
    return 0


def _load_train_config(path):
    blob = json.loads(Path(path).read_text())
    model_cfg = ARNConfig.from_dict(blob.get("model", {}))
    train_cfg = TrainConfig.from_dict(blob.get("train", {}))
    mix_opts = blob.get("mixing", {})
    return model_cfg, train_cfg, mix_opts


def cmd_train(args) -> int:
    model_cfg, train_cfg, mix_opts = _load_train_config(args.config)
    # precedence: --seed flag, then ARN_SEED, then the config file
    if args.seed is not None:
        train_cfg.seed = args.seed
    elif "ARN_SEED" in os.environ:
        train_cfg.seed = _seed()
    speech = CorpusIndex(args.speech_index)
    noise = CorpusIndex(args.noise_index)
    mixer = DynamicMixer(
        speech, noise,
        snr_choices=tuple(mix_opts.get("snr_choices", mixing.TRAIN_SNRS_DB)),
        target_len=int(mix_opts.get("target_len", mixing.CHUNK_LEN)),
        trim_db=float(mix_opts.get("trim_db", mixing.TRIM_THRESHOLD_DB)))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = model.init_params(model_cfg, np.random.default_rng(train_cfg.seed),
                               dtype=np.float32)
    val_pairs = mixer.sample(np.random.default_rng([train_cfg.seed, 0xA11]),
                             int(mix_opts.get("val_pairs", 4)))

    log_path = out_dir / "train_log.csv"
    with open(log_path, "w") as log_fh:
        def log(epoch, step, loss, lr):
            log_fh.write(f"{epoch},{step},{loss:.8g},{lr:.8g}\n")

        def progress(epoch, mean_loss):
            print(f"epoch {epoch}: mean loss {mean_loss:.6g}", flush=True)

        best = training.fit(params, model_cfg, train_cfg, mixer, val_pairs,
                            out_dir, log, progress=progress)
    print(f"best validation score: {best:.3f} dB")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arn",
        description="Attentive recurrent network for time-domain speech enhancement")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model with dynamic mixing")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--speech-index", required=True)
    p_train.add_argument("--noise-index", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_enh = sub.add_parser("enhance", help="enhance a WAV file or directory")
    p_enh.add_argument("--model", required=True)
    p_enh.add_argument("--in", dest="input", required=True)
    p_enh.add_argument("--out", dest="output", required=True)
    p_enh.add_argument("--pcm16", action="store_true",
                       help="write clamped 16-bit PCM instead of float32")
    p_enh.set_defaults(func=cmd_enhance)

    p_eval = sub.add_parser("evaluate", help="score clean/degraded pairs")
    p_eval.add_argument("--model", default=None,
                        help="enhance the second file of each pair before scoring")
    p_eval.add_argument("--pairs", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_mix = sub.add_parser("mix", help="mix speech and noise at a target SNR")
    p_mix.add_argument("--speech", required=True)
    p_mix.add_argument("--noise", required=True)
    p_mix.add_argument("--snr", type=int, required=True)
    p_mix.add_argument("--out", required=True, help="output path prefix")
    p_mix.set_defaults(func=cmd_mix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except WavFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WAV
    except (CheckpointError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
