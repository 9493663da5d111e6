#!/usr/bin/env python3
"""Generate the deterministic 12-clip toy corpus used by the tests and by
the end-to-end demo pipeline.

Usage: python3 scripts/make_toy_corpus.py <output-dir>
"""

import json
import sys
from pathlib import Path

TAXONOMY = {
    "actions": {
        "clean": {
            "reasons": [
                {"id": "r-clean-dirt", "label": "remove dirt", "source": "knowledge-graph"},
                {"id": "r-clean-guests", "label": "company was coming", "source": "knowledge-graph"},
                {"id": "r-clean-declutter", "label": "declutter", "source": "knowledge-graph"},
                {"id": "r-clean-habit", "label": "daily habit", "source": "knowledge-graph"},
            ],
            "clip_count": 5,
        },
        "cook": {
            "reasons": [
                {"id": "r-cook-hunger", "label": "being hungry", "source": "knowledge-graph"},
                {"id": "r-cook-save", "label": "save money", "source": "knowledge-graph"},
                {"id": "r-cook-fun", "label": "it is fun", "source": "knowledge-graph"},
            ],
            "clip_count": 4,
        },
        "write": {
            "reasons": [
                {"id": "r-write-notes", "label": "take notes", "source": "knowledge-graph"},
                {"id": "r-write-relax", "label": "relax the mind", "source": "knowledge-graph"},
                {"id": "r-write-work", "label": "work deadline", "source": "knowledge-graph"},
            ],
            "clip_count": 3,
        },
    }
}

# clip_id, video_id, start, end, action, excerpt
CLIPS = [
    ("c01", "v1", 0.0, 30.0, "clean", "i clean the kitchen because there is dirt everywhere"),
    ("c02", "v1", 40.0, 60.0, "clean", "i am cleaning today because guests are coming over"),
    ("c03", "v1", 70.0, 100.0, "clean", "we clean the shelves because there is too much clutter"),
    ("c04", "v1", 110.0, 130.0, "clean", "i clean every morning because it is my routine"),
    ("c05", "v1", 140.0, 170.0, "clean", "time to clean the bathroom since it looks messy"),
    ("c06", "v2", 0.0, 20.0, "cook", "i cook dinner because we are hungry"),
    ("c07", "v2", 30.0, 60.0, "cook", "i am cooking at home because it saves money"),
    ("c08", "v2", 70.0, 90.0, "cook", "we cook together because it is fun"),
    ("c09", "v2", 100.0, 130.0, "cook", "i cook lunch because eating out is expensive"),
    ("c10", "v3", 0.0, 40.0, "write", "i write in my journal because it helps me relax"),
    ("c11", "v3", 50.0, 80.0, "write", "i am writing my notes because the lecture was long"),
    ("c12", "v3", 90.0, 120.0, "write", "i write every evening because of a work deadline"),
]

# clip_id -> worker -> (selected ids, other text, modality, confidence)
VOTES = {
    "c01": [(["r-clean-dirt"], "allergy season", "verbal", "high"),
            (["r-clean-dirt"], None, "verbal", "high"),
            (["r-clean-dirt", "r-clean-declutter"], None, "both", "medium")],
    "c02": [(["r-clean-guests"], "allergy season", "verbal", "high"),
            (["r-clean-guests", "r-clean-dirt"], None, "verbal", "high"),
            (["r-clean-guests"], None, "verbal", "high")],
    "c03": [(["r-clean-declutter"], "allergy season", "both", "high"),
            (["r-clean-declutter"], None, "both", "high"),
            ([], None, "visual", "low")],
    "c04": [(["r-clean-habit", "r-clean-dirt"], None, "verbal", "medium"),
            (["r-clean-habit"], None, "verbal", "medium"),
            (["r-clean-dirt"], None, "verbal", "high")],
    "c05": [(["r-clean-declutter"], None, "verbal", "high"),
            (["r-clean-dirt"], None, "both", "high"),
            (["r-clean-declutter"], None, "verbal", "high")],
    "c06": [(["r-cook-hunger"], None, "verbal", "high"),
            (["r-cook-hunger"], None, "verbal", "high"),
            (["r-cook-hunger"], None, "both", "high")],
    "c07": [(["r-cook-save"], None, "verbal", "high"),
            (["r-cook-save"], None, "verbal", "medium"),
            (["r-cook-fun"], None, "verbal", "high")],
    "c08": [(["r-cook-fun"], None, "both", "high"),
            (["r-cook-fun", "r-cook-save"], None, "both", "high"),
            (["r-cook-fun"], None, "verbal", "high")],
    "c09": [(["r-cook-save", "r-cook-hunger"], None, "verbal", "high"),
            (["r-cook-save"], None, "verbal", "high"),
            (["r-cook-hunger"], None, "verbal", "medium")],
    "c10": [(["r-write-relax"], None, "verbal", "high"),
            (["r-write-relax"], None, "verbal", "high"),
            (["r-write-notes"], None, "visual", "medium")],
    "c11": [(["r-write-notes"], None, "both", "high"),
            (["r-write-notes"], None, "verbal", "high"),
            (["r-write-notes"], None, "verbal", "high")],
    "c12": [(["r-write-work"], None, "verbal", "high"),
            (["r-write-work"], None, "verbal", "high"),
            (["r-write-relax"], None, "verbal", "medium")],
}


def build_toy_corpus(path):
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    by_video = {}
    for clip_id, video_id, start, end, action, excerpt in CLIPS:
        by_video.setdefault(video_id, []).append((start, end, excerpt))
    with open(root / "transcripts.jsonl", "w", encoding="utf-8") as fh:
        for video_id in sorted(by_video):
            segments = [
                {"start_s": start, "end_s": end, "text": excerpt + "."}
                for start, end, excerpt in sorted(by_video[video_id])
            ]
            fh.write(json.dumps({"video_id": video_id, "channel_id": "ch1",
                                 "segments": segments}) + "\n")

    reason_ids = {
        action: [r["id"] for r in entry["reasons"]]
        for action, entry in TAXONOMY["actions"].items()
    }
    with open(root / "clips.jsonl", "w", encoding="utf-8") as fh:
        for clip_id, video_id, start, end, action, excerpt in CLIPS:
            fh.write(json.dumps({
                "clip_id": clip_id, "video_id": video_id,
                "start_s": start, "end_s": end, "action": action,
                "candidate_reason_ids": reason_ids[action],
                "excerpt": excerpt,
            }) + "\n")

    (root / "taxonomy.json").write_text(json.dumps(TAXONOMY, indent=2) + "\n",
                                        encoding="utf-8")

    with open(root / "annotations.jsonl", "w", encoding="utf-8") as fh:
        for clip_id in sorted(VOTES):
            for worker, (selected, other, modality, confidence) in enumerate(VOTES[clip_id], 1):
                fh.write(json.dumps({
                    "clip_id": clip_id, "worker_id": f"w{worker}",
                    "selected_reason_ids": selected,
                    "other_reason_text": other,
                    "modality": modality, "confidence": confidence,
                }) + "\n")
    return root


def main(argv):
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 64
    build_toy_corpus(argv[1])
    print(f"toy corpus written to {argv[1]}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv))
