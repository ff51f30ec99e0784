"""Scene simulator: exact delays, determinism, stems, schema validation."""

import json

import numpy as np
import pytest

from arraydiar.audio import MultichannelAudio
from arraydiar.errors import InvalidScene
from arraydiar.simulate import (
    SPEED_OF_SOUND,
    PositionEpoch,
    Reflection,
    SceneSpec,
    Source,
    exact_delays,
    load_scene,
    make_semistatic,
    scene_from_dict,
    synthesize,
    tdoa_table_to_csv,
)
from arraydiar.stft import stft
from arraydiar.tdoa import gcc_phat, lag_axis, mic_pairs

FS = 16000

MICS = np.array(
    [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.0]]
)


def _one_source_scene(position=(4.0, 0.0, 1.0), duration=2.0, **kwargs):
    return SceneSpec(
        mic_positions=MICS,
        sources=[
            Source(
                id="s0",
                speaker="alice",
                positions=[PositionEpoch(0.0, np.asarray(position))],
                activity=[(0.0, duration)],
                signal={"type": "white_noise"},
            )
        ],
        sample_rate=FS,
        duration=duration,
        **kwargs,
    )


def test_exact_delays_closed_form():
    # [DERIVED] source on the mic0->mic1 axis, 1 m apart mics:
    # tau_01 = -1 m / 343 m/s * 16000 Hz = -46.647... samples (closer to mic1)
    delays = exact_delays(np.array([4.0, 0.0, 1.0]), MICS, FS)
    expected_01 = -1.0 / SPEED_OF_SOUND * FS
    pairs = mic_pairs(4)
    assert delays[pairs.index((0, 1))] == pytest.approx(expected_01, abs=1e-9)
    # geometry is exact, not far-field: check against raw distances
    dist = np.linalg.norm(MICS - np.array([4.0, 0.0, 1.0]), axis=1)
    for p, (i, j) in enumerate(pairs):
        assert delays[p] == pytest.approx((dist[j] - dist[i]) / SPEED_OF_SOUND * FS)


def test_gcc_recovers_simulated_delay():
    scene = _one_source_scene(position=(3.0, 2.0, 1.3))
    result = synthesize(scene, seed=0)
    truth = exact_delays(np.array([3.0, 2.0, 1.3]), MICS, FS)
    spec = stft(result.audio, 1024, 256)
    lags = lag_axis(1024)
    for p, pair in enumerate(mic_pairs(4)):
        corr = gcc_phat(spec, pair, frame=20)
        assert abs(lags[np.argmax(corr)] - truth[p]) <= 0.5 + 1e-9


def test_synthesis_deterministic():
    scene = _one_source_scene()
    a = synthesize(scene, seed=7).audio.samples
    b = synthesize(scene, seed=7).audio.samples
    np.testing.assert_array_equal(a, b)
    c = synthesize(scene, seed=8).audio.samples
    assert np.max(np.abs(a - c)) > 0


def test_stems_sum_to_mixture_without_noise():
    scene = SceneSpec(
        mic_positions=MICS,
        sources=[
            Source("s0", "alice", [PositionEpoch(0.0, np.array([3.0, 1.0, 1.0]))],
                   [(0.0, 1.0)], {"type": "white_noise"}),
            Source("s1", "bob", [PositionEpoch(0.0, np.array([-2.0, 2.0, 1.5]))],
                   [(0.5, 2.0)], {"type": "band_noise", "low": 200, "high": 4000}),
        ],
        sample_rate=FS,
        duration=2.0,
    )
    result = synthesize(scene, seed=0)
    total = sum(result.stems.values())
    np.testing.assert_allclose(result.audio.samples, total, atol=1e-12)


def test_noise_floor_level():
    quiet = synthesize(_one_source_scene(), seed=0).audio.samples
    noisy_scene = _one_source_scene(noise_floor=-40.0)
    noisy = synthesize(noisy_scene, seed=0).audio.samples
    residual = noisy - quiet
    assert np.std(residual) == pytest.approx(10 ** (-40 / 20), rel=0.05)


def test_band_noise_respects_band_and_bands_union():
    def spectrum_energy(signal_spec):
        scene = _one_source_scene()
        scene.sources[0].signal = signal_spec
        x = synthesize(scene, seed=0).audio.samples[0]
        spec = np.abs(np.fft.rfft(x)) ** 2
        freqs = np.fft.rfftfreq(len(x), 1 / FS)
        return spec, freqs

    spec, freqs = spectrum_energy({"type": "band_noise", "low": 500, "high": 1500})
    # activity ramps smear the band edges slightly; demand 30 dB rejection
    inside = spec[(freqs > 520) & (freqs < 1480)].sum()
    outside = spec[(freqs < 480) | (freqs > 1520)].sum()
    assert outside < 1e-3 * inside

    spec, freqs = spectrum_energy(
        {"type": "band_noise", "bands": [[500, 1500], [3000, 4000]]}
    )
    gap = spec[(freqs > 1520) & (freqs < 2980)].sum()
    upper = spec[(freqs > 3020) & (freqs < 3980)].sum()
    assert upper > 0
    assert gap < 1e-3 * upper


def test_ground_truth_merges_same_speaker_activity():
    scene = _one_source_scene()
    scene.sources[0].activity = [(0.0, 1.0), (1.0, 2.0)]  # abutting
    result = synthesize(scene, seed=0)
    assert [(e.speaker, e.start, e.end) for e in result.ground_truth.entries] == [
        ("alice", 0.0, 2.0)
    ]


def test_reflection_adds_table_row_and_energy():
    scene = _one_source_scene()
    scene.reflections.append(Reflection("s0", np.array([4.0, 6.0, 1.0]), 0.7))
    scene.__post_init__()  # re-validate after mutation
    result = synthesize(scene, seed=0)
    kinds = [row.kind for row in result.tdoa_table]
    assert kinds.count("reflection") == 1
    plain = synthesize(_one_source_scene(), seed=0)
    assert np.std(result.audio.samples) > np.std(plain.audio.samples)


def test_scene_validation_errors():
    with pytest.raises(InvalidScene):  # too few mics
        SceneSpec(MICS[:3], [], FS, 1.0)
    with pytest.raises(InvalidScene):  # activity outside the scene
        _one_source_scene(duration=2.0).sources  # baseline ok
        s = _one_source_scene()
        s.sources[0].activity = [(0.0, 5.0)]
        SceneSpec(MICS, s.sources, FS, 2.0)
    with pytest.raises(InvalidScene):  # duplicate ids
        src = _one_source_scene().sources[0]
        SceneSpec(MICS, [src, src], FS, 2.0)
    with pytest.raises(InvalidScene):  # unknown reflection target
        SceneSpec(MICS, _one_source_scene().sources, FS, 2.0,
                  reflections=[Reflection("nope", np.zeros(3), 0.5)])
    with pytest.raises(InvalidScene):  # collocated source and mic
        synthesize(_one_source_scene(position=tuple(MICS[0])), seed=0)
    with pytest.raises(InvalidScene):  # unknown signal type
        s = _one_source_scene()
        s.sources[0].signal = {"type": "sine_sweep"}
        synthesize(s, seed=0)


def test_scene_from_dict_shorthand_and_epochs():
    doc = {
        "mic_positions": MICS.tolist(),
        "sample_rate": FS,
        "duration": 4.0,
        "sources": [
            {"id": "s0", "position": [3.0, 1.0, 1.0], "activity": [[0, 2]]},
            {
                "id": "s1",
                "speaker": "bob",
                "positions": [
                    {"time": 0.0, "position": [1.0, 2.0, 1.0]},
                    {"time": 2.0, "position": [2.0, 2.0, 1.0]},
                ],
                "activity": [[2, 4]],
                "signal": {"type": "band_noise", "low": 300, "high": 3000},
            },
        ],
    }
    scene = scene_from_dict(doc)
    assert scene.sources[0].speaker == "s0"  # defaults to the id
    assert scene.sources[0].signal == {"type": "white_noise"}
    assert len(scene.sources[1].positions) == 2
    synthesize(scene, seed=0)  # renders without error


def test_load_scene_rejects_bad_json(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text("{not json")
    with pytest.raises(InvalidScene):
        load_scene(path)
    path.write_text(json.dumps({"mic_positions": [[0, 0, 0]]}))
    with pytest.raises(InvalidScene):
        load_scene(path)


def test_make_semistatic_offsets_everything():
    a = _one_source_scene()
    b = _one_source_scene(position=(0.0, 4.0, 1.2))
    b.sources[0].speaker = "carol"
    combined = make_semistatic(a, b, speaker_map={"carol": "alice"})
    assert combined.duration == 4.0
    ids = [s.id for s in combined.sources]
    assert ids == ["a:s0", "b:s0"]
    assert combined.sources[1].speaker == "alice"  # mapped back
    assert combined.sources[1].activity == [(2.0, 4.0)]
    assert combined.sources[1].positions[0].time == 2.0
    result = synthesize(combined, seed=0)
    assert result.ground_truth.speakers() == ["alice"]


def test_make_semistatic_requires_matching_arrays():
    a = _one_source_scene()
    b = _one_source_scene()
    b.mic_positions = b.mic_positions + 0.5
    with pytest.raises(InvalidScene):
        make_semistatic(a, b)


def test_tdoa_table_csv():
    result = synthesize(_one_source_scene(), seed=0)
    csv = tdoa_table_to_csv(result.tdoa_table, 4)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("source,speaker,kind,epoch,start,end,tau_01")
    assert lines[0].count(",") == 6 + 5  # 6 metadata + 6 pair columns
    assert lines[1].startswith("s0,alice,direct,0,")
