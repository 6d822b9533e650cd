"""Deterministic synthetic generator of labeled benign/ransomware streams.

Every event source (each benign worker, each attack entity, each exfil
channel) draws from its own RNG substream keyed by (scenario seed, source
name), and maskable draws are consumed whether or not the mask fires. Two
consequences the tests rely on: a scenario+seed always produces a
byte-identical stream, and sweeps that vary one profile field against a
common seed keep every other source's events literally unchanged (for the
obfuscation sweep the per-event mask decisions are nested: raising the
level only masks more).

Benign archetypes (workers are heterogeneous and sessions churn through
the run, so benign cold starts happen everywhere, not just at t=0):
  office  sparse bursts of document edits with per-filetype entropy,
          autosave renames, optional mail traffic
  build   job sessions that fetch dependencies then storm-write outputs,
          some incrementally rewriting artifacts in place (false-positive
          stressor on rates and renames)
  backup  copy / in-place verify / direct-to-cloud upload modes with
          enumeration scans and offsite transfer (false-positive stressor
          on volume, egress, and write-back patterns)

An attack entity opens its exfil channel (which reads what it steals),
then per victim file emits read -> write (ciphertext entropy, same path)
-> rename (to the family extension) at its encryption speed, gated by
on/off duty cycles, until the victim corpus is exhausted. Obfuscation o
independently masks each telltale with probability o: write entropy is
redrawn from the file's natural distribution, the rename is suppressed,
the write is staged to a decoy path, the exfil burst shrinks to
benign-sized transfers. Physical ceilings couple speed to stealth: past
the crypto throughput ceiling files are only partially encrypted, extreme
cadences skip the rename ceremony, and the telemetry sensor thins
sustained floods.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Iterator

from .types import ConfigError, Event, EventKind, Truth

FILETYPES = ("docx", "xlsx", "pdf", "jpg", "exe")

# natural payload entropy (bits/byte) of each file type: compressed formats
# (jpg, and pdf to a degree) sit close to encrypted content, which is what
# makes them harder to tell apart from ciphertext
_EXT_ENTROPY = {"docx": 4.3, "xlsx": 4.1, "pdf": 6.3, "jpg": 7.4, "exe": 6.2}

_CYCLE_SECONDS = 8.0
_EXFIL_INTERVAL = 0.4

# attacker's sustained encryption throughput ceiling; when the configured
# file cadence outruns it, each file is only partially encrypted and the
# written payload's entropy is a mix of ciphertext and original content
_ENCRYPT_BYTES_PER_SEC = 2_000_000.0

# the victim corpus is finite: an attack goes silent (exfil aside) once it
# has touched every file, so faster campaigns are shorter bursts
_VICTIM_CORPUS_FILES = 900

# telemetry sensors rate-limit per-process event streams: a token bucket
# per entity absorbs ordinary bursts but thins sustained floods, so the
# observable event rate of any one process is capped
_SENSOR_RATE_PER_SEC = 60.0
_SENSOR_BURST = 400.0

# past this cadence the per-file rename ceremony is skipped to sustain
# throughput (speed-optimized operation); the skip fraction grows
# quadratically with overload, so extreme speeds drop ceremony almost
# entirely
_RENAME_OPS_PER_SEC = 8.0


def _box_muller(u1: float, u2: float, mean: float, sd: float) -> float:
    if u1 < 1e-12:
        u1 = 1e-12
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return mean + sd * z


def _box_muller_clamped(us: tuple[float, float], mean: float, sd: float) -> float:
    return min(8.0, max(0.0, _box_muller(us[0], us[1], mean, sd)))


def _gauss(rng: random.Random, mean: float, sd: float) -> float:
    """Box-Muller with a fixed two-draw budget (random.gauss uses rejection)."""
    return _box_muller(rng.random(), rng.random(), mean, sd)


def _entropy_clamped(rng: random.Random, mean: float, sd: float) -> float:
    return min(8.0, max(0.0, _gauss(rng, mean, sd)))


def _lognormal_bytes(rng: random.Random, mu: float, sigma: float) -> int:
    return max(1, int(math.exp(_gauss(rng, mu, sigma))))


@dataclass
class FamilyProfile:
    """Behavioral preset for one ransomware family."""

    name: str
    files_per_sec: float
    entropy_mean: float
    entropy_sd: float
    obfuscation: float
    intermittent_duty: float
    delay_start_s: float
    filetype_mix: dict[str, float]
    exfil_bytes_per_sec: float
    rename_to_ext: str

    def validate(self) -> "FamilyProfile":
        if self.files_per_sec <= 0:
            raise ConfigError("files_per_sec: must be > 0")
        if not (0.0 <= self.obfuscation <= 1.0):
            raise ConfigError("obfuscation: must be in [0,1]")
        if not (0.0 < self.intermittent_duty <= 1.0):
            raise ConfigError("intermittent_duty: must be in (0,1]")
        if self.delay_start_s < 0:
            raise ConfigError("delay_start_s: must be >= 0")
        if self.exfil_bytes_per_sec < 0:
            raise ConfigError("exfil_bytes_per_sec: must be >= 0")
        if not self.filetype_mix:
            raise ConfigError("filetype_mix: must not be empty")
        total = 0.0
        for ext, w in self.filetype_mix.items():
            if ext not in FILETYPES:
                raise ConfigError(f"filetype_mix: unknown filetype {ext!r}")
            if w < 0:
                raise ConfigError("filetype_mix: weights must be >= 0")
            total += w
        if total <= 0:
            raise ConfigError("filetype_mix: weights must sum > 0")
        return self


@dataclass
class AttackSpec:
    profile: FamilyProfile
    start_s: float = 0.0


@dataclass
class Scenario:
    duration_s: float
    benign_workers: dict[str, int] = field(default_factory=dict)
    attacks: list[AttackSpec] = field(default_factory=list)
    seed: int = 0

    def validate(self) -> "Scenario":
        if self.duration_s <= 0:
            raise ConfigError("duration_s: must be > 0")
        for kind, count in self.benign_workers.items():
            if kind not in ("office", "build", "backup"):
                raise ConfigError(f"benign_workers: unknown archetype {kind!r}")
            if count < 0:
                raise ConfigError("benign_workers: counts must be >= 0")
        for atk in self.attacks:
            atk.profile.validate()
            if atk.start_s < 0:
                raise ConfigError("attacks: start_s must be >= 0")
        return self


def load_presets() -> dict[str, dict]:
    text = (
        importlib_resources.files("zsd").joinpath("profiles.json").read_text("utf-8")
    )
    return json.loads(text)


def profile_from_name(
    family: str, overrides: dict | None = None, presets: dict | None = None
) -> FamilyProfile:
    presets = presets if presets is not None else load_presets()
    if family not in presets:
        raise ConfigError(f"unknown family {family!r}")
    data = dict(presets[family])
    data.update(overrides or {})
    data["filetype_mix"] = dict(data["filetype_mix"])
    return FamilyProfile(name=family, **data).validate()


def scenario_from_mapping(data: dict, presets: dict | None = None) -> Scenario:
    attacks = []
    for entry in data.get("attacks", []):
        if "profile" in entry:
            pd = dict(entry["profile"])
            name = pd.pop("name", "custom")
            prof = FamilyProfile(name=name, **pd).validate()
        else:
            prof = profile_from_name(
                entry["family"], entry.get("overrides"), presets=presets
            )
        attacks.append(AttackSpec(profile=prof, start_s=float(entry.get("start_s", 0.0))))
    return Scenario(
        duration_s=float(data["duration_s"]),
        benign_workers={k: int(v) for k, v in data.get("benign_workers", {}).items()},
        attacks=attacks,
        seed=int(data.get("seed", 0)),
    ).validate()


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    scenario = scenario_from_mapping(data)
    if seed_override is not None:
        scenario.seed = seed_override
    return scenario


def _source_rng(scenario_seed: int, source: str) -> random.Random:
    return random.Random(f"{scenario_seed}:{source}")


def _office_events(rng: random.Random, entity: str, duration: float) -> Iterator[Event]:
    exts = [FILETYPES[int(rng.random() * 4)] for _ in range(40)]
    pool = [f"/home/{entity}/docs/doc_{i:03d}.{exts[i]}" for i in range(40)]
    # workers differ: typing pace, save habits, mail chattiness; a good
    # fraction of document processes never touch the network at all
    pace = 0.4 + 2.6 * rng.random()
    write_p = 0.4 + 0.3 * rng.random()
    mail_p = 0.03 + 0.12 * rng.random() if rng.random() < 0.55 else 0.0
    # sessions begin throughout the run, usually with a mail-client sync
    t = rng.random() * duration * 0.5
    if mail_p > 0 and rng.random() < 0.75 and t < duration:
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_CONNECT,
                    dst="mail.corp", truth=Truth.BENIGN)
        t += 0.05 + rng.random() * 0.3
        if t < duration:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                        dst="mail.corp", bytes=_lognormal_bytes(rng, 8.0, 0.6),
                        entropy=_entropy_clamped(rng, 5.2, 0.5), truth=Truth.BENIGN)
        t += 0.3 + rng.random() * 2.0
    while t < duration:
        i = int(rng.random() * len(pool))
        path = pool[i]
        base = _EXT_ENTROPY[exts[i]]
        ent = _entropy_clamped(rng, base, 0.5)
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                    path=path, bytes=_lognormal_bytes(rng, 9.8, 0.8),
                    entropy=ent, truth=Truth.BENIGN)
        t += 0.05 + rng.random() * 0.4
        u = rng.random()
        if u < write_p and t < duration:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_WRITE,
                        path=path, bytes=_lognormal_bytes(rng, 9.9, 0.8),
                        entropy=_entropy_clamped(rng, base + 0.1, 0.5),
                        truth=Truth.BENIGN)
            t += 0.05 + rng.random() * 0.3
            # autosave: temp file renamed over the document
            if rng.random() < 0.12 and t < duration:
                yield Event(ts=int(t * 1e6), entity=entity,
                            kind=EventKind.FILE_RENAME, path=path,
                            ext_before="tmp", ext_after=exts[i],
                            truth=Truth.BENIGN)
                t += 0.02 + rng.random() * 0.1
        elif u < write_p + mail_p and t < duration:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_CONNECT,
                        dst="mail.corp", truth=Truth.BENIGN)
            t += 0.02 + rng.random() * 0.1
            if t < duration:
                yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                            dst="mail.corp", bytes=_lognormal_bytes(rng, 8.5, 0.7),
                            entropy=_entropy_clamped(rng, 5.2, 0.5), truth=Truth.BENIGN)
            t += 0.02 + rng.random() * 0.1
        # long think-time between touches
        t += (1.0 + rng.random() * 6.0) * pace


def _build_events(rng: random.Random, entity: str, duration: float,
                  start: float = 0.0, end: float | None = None) -> Iterator[Event]:
    end = duration if end is None else min(end, duration)
    duration = end
    # incremental jobs re-read and rewrite their own outputs in place;
    # clean builds read sources and write fresh objects
    incremental = rng.random() < 0.45
    t = start + 0.5 + rng.random() * 4.0
    build_no = 0
    # CI-style session start: fetch dependencies from the registry
    if t < duration:
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_CONNECT,
                    dst="registry.corp", truth=Truth.BENIGN)
        t += 0.05 + rng.random() * 0.5
        if rng.random() < 0.8 and t < duration:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                        dst="registry.corp", bytes=_lognormal_bytes(rng, 9.5, 0.8),
                        entropy=_entropy_clamped(rng, 6.0, 0.5), truth=Truth.BENIGN)
            t += 0.1 + rng.random() * 1.5
    while t < duration:
        n_src = 12 + int(rng.random() * 24)
        for i in range(n_src):
            if t >= duration:
                return
            if incremental:
                rpath = f"/build/{entity}/mod_{i:03d}.o"
                rent = _entropy_clamped(rng, 6.1, 0.25)
            else:
                rpath = f"/src/{entity}/mod_{i:03d}.c"
                rent = _entropy_clamped(rng, 5.0, 0.3)
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                        path=rpath, bytes=_lognormal_bytes(rng, 9.0, 0.6),
                        entropy=rent, truth=Truth.BENIGN)
            t += 0.002 + rng.random() * 0.01
        n_obj = max(4, int(n_src * 0.8))
        for i in range(n_obj):
            if t >= duration:
                return
            obj = f"/build/{entity}/mod_{i:03d}.o"
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_WRITE,
                        path=obj, bytes=_lognormal_bytes(rng, 10.5, 0.7),
                        entropy=_entropy_clamped(rng, 6.1, 0.25), truth=Truth.BENIGN)
            t += 0.001 + rng.random() * 0.006
            # compilers write to temp files and rename them into place
            if rng.random() < 0.35 and t < duration:
                yield Event(ts=int(t * 1e6), entity=entity,
                            kind=EventKind.FILE_RENAME, path=obj,
                            ext_before="tmp", ext_after="o", truth=Truth.BENIGN)
                t += 0.001 + rng.random() * 0.004
        if t < duration:
            exe = f"/build/{entity}/app_{build_no:04d}.exe"
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_WRITE,
                        path=exe, bytes=_lognormal_bytes(rng, 12.0, 0.5),
                        entropy=_entropy_clamped(rng, 6.4, 0.2), truth=Truth.BENIGN)
            t += 0.01 + rng.random() * 0.02
            if t < duration:
                yield Event(ts=int(t * 1e6), entity=entity,
                            kind=EventKind.FILE_RENAME, path=exe,
                            ext_before="tmp", ext_after="exe", truth=Truth.BENIGN)
        if rng.random() < 0.3 and t + 0.05 < duration:
            t += 0.05
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_DELETE,
                        path=f"/build/{entity}/mod_000.o", truth=Truth.BENIGN)
        build_no += 1
        t += 8.0 + rng.random() * 30.0


def _backup_events(rng: random.Random, entity: str, duration: float) -> Iterator[Event]:
    # backup sessions start anywhere in the first third of the run and open
    # with a connection to the vault; jobs differ widely in pacing, from
    # leisurely archival to aggressive rsync-style mirrors. Modes: local
    # copy, verify/repair (rewrites archives in place), and direct-to-cloud
    # upload (reads paired with sends, no local writes).
    pace = 0.25 + 1.35 * rng.random()
    send_every = 0.4 + 2.0 * rng.random()
    scan_every = 40.0 + 60.0 * rng.random()
    u_mode = rng.random()
    verify = u_mode < 0.3
    upload_only = 0.3 <= u_mode < 0.6
    t = rng.random() * duration * 0.3
    i = 0
    last_send = t
    next_scan = t  # sessions open with an enumeration scan
    if t < duration:
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_CONNECT,
                    dst="vault.corp", truth=Truth.BENIGN)
        t += 0.02 + rng.random() * 0.2
    while t < duration:
        if t >= next_scan:
            # delta-scan phase: a burst of reads with checksum exchanges
            # but no copies yet
            n_scan = 30 + int(rng.random() * 80)
            for _ in range(n_scan):
                if t >= duration:
                    return
                ext = FILETYPES[int(rng.random() * 4)]
                yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                            path=f"/data/{entity}/s_{int(rng.random() * 4000):05d}.{ext}",
                            bytes=_lognormal_bytes(rng, 8.0, 0.5),
                            entropy=_entropy_clamped(rng, _EXT_ENTROPY[ext], 0.5),
                            truth=Truth.BENIGN)
                t += 0.01 + rng.random() * 0.04
                if t - last_send > send_every * 0.5 and t < duration:
                    yield Event(ts=int(t * 1e6), entity=entity,
                                kind=EventKind.NET_SEND, dst="vault.corp",
                                bytes=_lognormal_bytes(rng, 10.0, 0.8),
                                entropy=_entropy_clamped(rng, 6.8, 0.6),
                                truth=Truth.BENIGN)
                    last_send = t
                    t += 0.01 + rng.random() * 0.02
            next_scan = t + scan_every * (0.7 + 0.6 * rng.random())
        ext = FILETYPES[int(rng.random() * 4)]
        if verify:
            src = f"/backup/{entity}/f_{i % 2500:05d}"
            dst = src
        else:
            src = f"/data/{entity}/f_{i:05d}.{ext}"
            dst = f"/backup/{entity}/f_{i:05d}"
        ent = _entropy_clamped(rng, _EXT_ENTROPY[ext], 0.5)
        size = _lognormal_bytes(rng, 10.8, 0.9)
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                    path=src, bytes=size, entropy=ent, truth=Truth.BENIGN)
        t += (0.01 + rng.random() * 0.05) * pace
        if t >= duration:
            return
        if upload_only:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                        dst="vault.corp", bytes=size, entropy=ent, truth=Truth.BENIGN)
            last_send = t
            i += 1
            t += (0.1 + rng.random() * 0.4) * pace
            continue
        # copy or in-place repair: entropy unchanged by construction
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_WRITE,
                    path=dst, bytes=size, entropy=ent, truth=Truth.BENIGN)
        t += (0.02 + rng.random() * 0.08) * pace
        if t - last_send > send_every and t < duration:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                        dst="vault.corp", bytes=size, entropy=ent, truth=Truth.BENIGN)
            last_send = t
            t += 0.01 + rng.random() * 0.03
        i += 1
        t += (0.05 + rng.random() * 0.15) * pace


def _active_at(t: float, start: float, duty: float) -> bool:
    if duty >= 1.0:
        return True
    phase = (t - start) % _CYCLE_SECONDS
    return phase < duty * _CYCLE_SECONDS


def _next_active(t: float, start: float, duty: float) -> float:
    if duty >= 1.0 or _active_at(t, start, duty):
        return t
    cycles = (t - start) // _CYCLE_SECONDS
    return start + (cycles + 1) * _CYCLE_SECONDS


def _attack_file_events(
    rng: random.Random, entity: str, profile: FamilyProfile, start: float, duration: float
) -> Iterator[Event]:
    mix_exts = sorted(profile.filetype_mix)
    mix_total = sum(profile.filetype_mix[e] for e in mix_exts)
    duty = profile.intermittent_duty
    gap = 1.0 / profile.files_per_sec
    crypto_budget = _ENCRYPT_BYTES_PER_SEC / profile.files_per_sec
    rename_keep = min(1.0, (_RENAME_OPS_PER_SEC / profile.files_per_sec) ** 2)
    # double extortion: the exfil channel opens first, encryption follows
    t = start + 3.0 + 5.0 * rng.random()
    j = 0
    while j < _VICTIM_CORPUS_FILES:
        t = _next_active(t, start, duty)
        # fixed draw budget per file (14 draws) so mask decisions stay
        # aligned across obfuscation levels under a common seed
        u_ext = rng.random()
        jitter = 0.7 + 0.6 * rng.random()
        u_read = (rng.random(), rng.random())
        e_attack = _entropy_clamped(rng, profile.entropy_mean, profile.entropy_sd)
        u_masked = (rng.random(), rng.random())
        u_mask_entropy = rng.random()
        u_mask_rename = rng.random()
        u_mask_pattern = rng.random()
        size = _lognormal_bytes(rng, 10.9, 0.8)
        # encryption is IO-bound: the per-file step scales with file size,
        # and the intra-file offsets stay inside the step so the stream
        # remains time-ordered
        step = gap * jitter * (0.35 + 0.65 * size / 74700.0)
        d1 = step * (0.15 + 0.2 * rng.random())
        d2 = step * (0.45 + 0.2 * rng.random())

        acc = 0.0
        for e in mix_exts:
            acc += profile.filetype_mix[e] / mix_total
            if u_ext <= acc:
                ext = e
                break
        else:
            ext = mix_exts[-1]
        base = _EXT_ENTROPY[ext]
        e_read = _box_muller_clamped(u_read, base, 0.5)
        e_masked = _box_muller_clamped(u_masked, base + 0.1, 0.5)

        path = f"/u/victim/files/f_{j:06d}.{ext}"

        if t >= duration:
            return
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                    path=path, bytes=size, entropy=e_read, truth=Truth.MALICIOUS)
        tw = t + d1
        if tw >= duration:
            return
        if u_mask_entropy < profile.obfuscation:
            e_write = e_masked
        else:
            # partial encryption: past the throughput ceiling only a
            # fraction of each file is ciphertext
            frac = crypto_budget / size
            if frac >= 1.0:
                e_write = e_attack
            else:
                e_write = frac * e_attack + (1.0 - frac) * e_read
        if u_mask_pattern < profile.obfuscation:
            # pattern mask: encrypted copy written beside the original
            # instead of over it (defeats read-then-write correlation)
            write_path = f"/u/victim/files/.stage/c_{j:06d}.{ext}"
        else:
            write_path = path
        yield Event(ts=int(tw * 1e6), entity=entity, kind=EventKind.FILE_WRITE,
                    path=write_path, bytes=size, entropy=e_write,
                    truth=Truth.MALICIOUS)
        tr = t + d2
        if tr >= duration:
            return
        if u_mask_rename >= 1.0 - rename_keep * (1.0 - profile.obfuscation):
            yield Event(ts=int(tr * 1e6), entity=entity, kind=EventKind.FILE_RENAME,
                        path=path, ext_before=ext, ext_after=profile.rename_to_ext,
                        truth=Truth.MALICIOUS)
        j += 1
        t += step


def _attack_exfil_events(
    rng: random.Random, entity: str, profile: FamilyProfile, start: float, duration: float
) -> Iterator[Event]:
    if profile.exfil_bytes_per_sec <= 0:
        return
    duty = profile.intermittent_duty
    # the channel goes quiet when the encryption campaign completes
    # (campaign = exfil lead + corpus work stretched by the duty cycle)
    campaign = 10.0 + _VICTIM_CORPUS_FILES / profile.files_per_sec / duty + 5.0
    end = min(duration, start + campaign)
    t = start
    connected_cycle = -1.0
    while True:
        t = _next_active(t, start, duty)
        if t >= end:
            return
        cycle = (t - start) // _CYCLE_SECONDS if duty < 1.0 else 0.0
        if cycle != connected_cycle:
            yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_CONNECT,
                        dst="203.0.113.66", truth=Truth.MALICIOUS)
            connected_cycle = cycle
            t += 0.01
            if t >= end:
                return
        burst = profile.exfil_bytes_per_sec * _EXFIL_INTERVAL
        u_mask = rng.random()
        jitter = 0.8 + 0.4 * rng.random()
        benign_size = _lognormal_bytes(rng, 8.3, 0.5)
        e_hot = _entropy_clamped(rng, 7.9, 0.05)
        e_cold = _entropy_clamped(rng, 5.3, 0.6)
        u_rext = rng.random()
        u_stage = (rng.random(), rng.random())
        # staging read: exfiltration reads what it steals
        rext = FILETYPES[int(u_rext * 4)]
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.FILE_READ,
                    path=f"/u/victim/files/x_{int(u_rext * 5000):05d}.{rext}",
                    bytes=_lognormal_bytes(rng, 10.2, 0.8),
                    entropy=_box_muller_clamped(u_stage, _EXT_ENTROPY[rext], 0.5),
                    truth=Truth.MALICIOUS)
        t += 0.02 + 0.05 * rng.random()
        if t >= end:
            return
        if u_mask < profile.obfuscation:
            nbytes, ent = benign_size, e_cold
        else:
            nbytes, ent = max(1, int(burst * jitter)), e_hot
        yield Event(ts=int(t * 1e6), entity=entity, kind=EventKind.NET_SEND,
                    dst="203.0.113.66", bytes=nbytes, entropy=ent,
                    truth=Truth.MALICIOUS)
        t += _EXFIL_INTERVAL


@dataclass
class TruthIndex:
    """Sidecar ground truth: entity -> label (+ family, first malicious ts)."""

    entities: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"entities": self.entities}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TruthIndex":
        data = json.loads(text)
        return cls(entities=data["entities"])

    @classmethod
    def load(cls, path: str | Path) -> "TruthIndex":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def generate(scenario: Scenario) -> tuple[list[Event], TruthIndex]:
    """Produce the ts-sorted labeled stream and its truth index."""
    scenario.validate()
    duration = scenario.duration_s
    seed = scenario.seed
    truth = TruthIndex()
    streams = []

    for i in range(scenario.benign_workers.get("office", 0)):
        entity = f"office_{i}"
        streams.append(_office_events(_source_rng(seed, entity), entity, duration))
        truth.entities[entity] = {"label": "benign"}

    # build jobs churn: each worker slot spawns a sequence of session
    # entities so cold starts occur throughout the run
    for i in range(scenario.benign_workers.get("build", 0)):
        sched = _source_rng(seed, f"build_{i}:sched")
        t0 = sched.random() * 40.0
        k = 0
        while t0 < duration:
            length = 90.0 + sched.random() * 150.0
            entity = f"build_{i}s{k}"
            rng = _source_rng(seed, entity)
            streams.append(_build_events(rng, entity, duration,
                                         start=t0, end=t0 + length))
            truth.entities[entity] = {"label": "benign"}
            t0 += length + 15.0 + sched.random() * 60.0
            k += 1

    for i in range(scenario.benign_workers.get("backup", 0)):
        entity = f"backup_{i}"
        streams.append(_backup_events(_source_rng(seed, entity), entity, duration))
        truth.entities[entity] = {"label": "benign"}

    for i, atk in enumerate(scenario.attacks):
        prof = atk.profile
        entity = f"atk_{prof.name}_{i}"
        start = atk.start_s + prof.delay_start_s
        rng_f = _source_rng(seed, f"{entity}:files")
        rng_x = _source_rng(seed, f"{entity}:exfil")
        streams.append(_attack_file_events(rng_f, entity, prof, start, duration))
        streams.append(_attack_exfil_events(rng_x, entity, prof, start, duration))
        truth.entities[entity] = {
            "label": "malicious",
            "family": prof.name,
            "first_malicious_ts": int(start * 1e6),
        }

    # merge per-source sorted streams (tie-break on stream index), applying
    # the per-entity sensor rate limit deterministically
    events: list[Event] = []
    iters = [iter(s) for s in streams]
    heap: list[tuple[int, int, Event]] = []
    for idx, it in enumerate(iters):
        first = next(it, None)
        if first is not None:
            heapq.heappush(heap, (first.ts, idx, first))
    buckets: dict[str, tuple[float, int]] = {}
    while heap:
        _, idx, evt = heapq.heappop(heap)
        state = buckets.get(evt.entity)
        if state is None:
            tokens, last_ts = _SENSOR_BURST, evt.ts
        else:
            tokens, last_ts = state
            tokens = min(
                _SENSOR_BURST,
                tokens + (evt.ts - last_ts) * (_SENSOR_RATE_PER_SEC / 1e6),
            )
        if tokens >= 1.0:
            tokens -= 1.0
            events.append(evt)
        buckets[evt.entity] = (tokens, evt.ts)
        nxt = next(iters[idx], None)
        if nxt is not None:
            heapq.heappush(heap, (nxt.ts, idx, nxt))

    for entity, info in truth.entities.items():
        if info["label"] == "malicious":
            first = next((e.ts for e in events if e.entity == entity), None)
            if first is not None:
                info["first_malicious_ts"] = first
    return events, truth


def event_to_json_line(event: Event) -> str:
    obj: dict = {"ts": event.ts, "entity": event.entity, "kind": event.kind.value}
    if event.path is not None:
        obj["path"] = event.path
    if event.ext_before is not None:
        obj["ext_before"] = event.ext_before
    if event.ext_after is not None:
        obj["ext_after"] = event.ext_after
    if event.bytes is not None:
        obj["bytes"] = event.bytes
    if event.entropy is not None:
        obj["entropy"] = round(event.entropy, 6)
    if event.dst is not None:
        obj["dst"] = event.dst
    if event.truth is not None:
        obj["truth"] = event.truth.value
    return json.dumps(obj, separators=(",", ":"))


def write_events(events: list[Event], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(event_to_json_line(e))
            fh.write("\n")


def _scenario_doc(
    duration_s: float,
    benign: dict[str, int],
    attacks: list[dict],
    seed: int = 1,
) -> dict:
    return {
        "duration_s": duration_s,
        "seed": seed,
        "benign_workers": benign,
        "attacks": attacks,
    }


_BENIGN_STD = {"office": 4, "build": 1, "backup": 2}
FAMILIES = ("lockbit", "conti", "revil", "blackmatter")


def _train_doc(seed: int = 101) -> dict:
    # training covers the families at the obfuscation levels of captured
    # samples (light); heavier masking is the evasion frontier the sweeps
    # probe, so it stays out of the training distribution
    return _scenario_doc(
        560.0,
        dict(_BENIGN_STD),
        [
            {"family": "lockbit", "start_s": 40.0, "overrides": {"obfuscation": 0.0}},
            {"family": "lockbit", "start_s": 120.0, "overrides": {"obfuscation": 0.25}},
            {"family": "conti", "start_s": 200.0, "overrides": {"obfuscation": 0.1}},
            {"family": "conti", "start_s": 280.0,
             "overrides": {"obfuscation": 0.15, "files_per_sec": 4.0}},
            {"family": "revil", "start_s": 360.0, "overrides": {"obfuscation": 0.2}},
            {"family": "blackmatter", "start_s": 440.0, "overrides": {}},
        ],
        seed=seed,
    )


def make_standard_suites(out_dir: str | Path) -> dict[str, Path]:
    """Write the standard experiment suites under out_dir (s1..s5).

    Each suite directory holds scenario manifests plus a suite.json that
    names the swept parameter, the per-run metadata, the seeds, and the
    shared training scenario.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def emit(suite: str, doc: dict, scenarios: dict[str, dict]) -> None:
        sdir = root / suite
        sdir.mkdir(parents=True, exist_ok=True)
        for fname, scen in scenarios.items():
            with open(sdir / fname, "w", encoding="utf-8") as fh:
                json.dump(scen, fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(sdir / "suite.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written[suite] = sdir

    # S1: per-family accuracy, fixed 10-minute scenarios
    runs = []
    scenarios = {"train.json": _train_doc()}
    for fam in FAMILIES:
        fname = f"{fam}.json"
        scenarios[fname] = _scenario_doc(
            600.0, dict(_BENIGN_STD), [{"family": fam, "start_s": 240.0}]
        )
        runs.append({"scenario": fname, "sweep_value": fam, "family": fam})
    emit("s1", {
        "suite": "s1", "sweep_param": "family", "seeds": [1, 2, 3, 4, 5],
        "train_scenario": "train.json", "runs": runs, "config_overrides": {},
    }, scenarios)

    # S2: detection by file type
    runs = []
    scenarios = {"train.json": _train_doc()}
    for fam in FAMILIES:
        for ft in FILETYPES:
            fname = f"{fam}_{ft}.json"
            scenarios[fname] = _scenario_doc(
                240.0, dict(_BENIGN_STD),
                [{"family": fam, "start_s": 90.0,
                  "overrides": {"filetype_mix": {ft: 1.0}}}],
            )
            runs.append({"scenario": fname, "sweep_value": ft, "family": fam})
    emit("s2", {
        "suite": "s2", "sweep_param": "filetype", "seeds": [1, 2, 3],
        "train_scenario": "train.json", "runs": runs, "config_overrides": {},
    }, scenarios)

    # S3: obfuscation sweep; within a family the manifests differ only in
    # the obfuscation override (duty pinned so masking is the only moving
    # part). The experiment raises the decision bar (tau, confirmations) so
    # the detector operates on the sensitive shoulder of its curve.
    levels = (0.0, 0.25, 0.5, 0.75, 1.0)
    runs = []
    scenarios = {"train.json": _train_doc()}
    for fam in ("lockbit", "conti", "revil"):
        for lvl in levels:
            fname = f"{fam}_obf{int(lvl * 100):03d}.json"
            scenarios[fname] = _scenario_doc(
                300.0, dict(_BENIGN_STD),
                [{"family": fam, "start_s": 90.0,
                  "overrides": {"obfuscation": lvl, "intermittent_duty": 1.0}},
                 {"family": fam, "start_s": 120.0,
                  "overrides": {"obfuscation": lvl, "intermittent_duty": 1.0}}],
            )
            runs.append({"scenario": fname, "sweep_value": lvl, "family": fam})
    emit("s3", {
        "suite": "s3", "sweep_param": "obfuscation", "seeds": [1, 2, 3, 4, 5],
        "train_scenario": "train.json", "runs": runs,
        "config_overrides": {"tau": 0.58, "smooth_m": 5},
    }, scenarios)

    # S4: encryption-speed sweep spanning almost two decades. Obfuscation
    # and duty are held constant across the sweep so the speed effects
    # (partial encryption diluting payload entropy, ceremony and telemetry
    # ceilings) are the only moving parts.
    speeds = (4.0, 10.0, 25.0, 60.0, 140.0, 300.0)
    runs = []
    scenarios = {"train.json": _train_doc()}
    for fam in ("lockbit", "blackmatter"):
        for sp in speeds:
            fname = f"{fam}_fps{int(sp):03d}.json"
            duration = min(480.0, 120.0 + _VICTIM_CORPUS_FILES / sp)
            overrides = {"files_per_sec": sp, "obfuscation": 0.4,
                         "intermittent_duty": 1.0}
            scenarios[fname] = _scenario_doc(
                duration, dict(_BENIGN_STD),
                [{"family": fam, "start_s": 60.0, "overrides": dict(overrides)},
                 {"family": fam, "start_s": 75.0, "overrides": dict(overrides)}],
            )
            runs.append({"scenario": fname, "sweep_value": sp, "family": fam})
    emit("s4", {
        "suite": "s4", "sweep_param": "files_per_sec", "seeds": [1, 2, 3, 4, 5],
        "train_scenario": "train.json", "runs": runs, "config_overrides": {},
    }, scenarios)

    # S5: benign load ladder for latency/throughput
    runs = []
    scenarios = {"train.json": _train_doc()}
    for n in (2, 4, 8, 16, 32):
        fname = f"load_{n:02d}.json"
        scenarios[fname] = _scenario_doc(
            90.0,
            {"office": n, "build": max(1, n // 4), "backup": max(1, n // 8)},
            [],
        )
        runs.append({"scenario": fname, "sweep_value": n, "family": "none"})
    emit("s5", {
        "suite": "s5", "sweep_param": "load", "seeds": [1],
        "train_scenario": "train.json", "runs": runs, "config_overrides": {},
    }, scenarios)

    return written
