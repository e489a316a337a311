#pragma once

#include <map>
#include <string>
#include <vector>

#include "camflow/dataset.hpp"
#include "camflow/model.hpp"
#include "camflow/train.hpp"

namespace camflow::eval {

// Peak signal-to-noise ratio between [0,1] videos, capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);

struct Detection {
    double u = 0.0, v = 0.0;  // mean of matched pixel centers
    int pixels = 0;
    bool border = false;  // some matched pixel lies on the image edge
    bool found() const { return pixels > 0; }
};

// Segments one frame [c,h,w] by color proximity. Palette colors are spaced
// more than twice this tolerance apart, so a within-tolerance match is also
// the nearest palette entry.
Detection detect_color(const Tensor& frame, const Vec3& color, double tol = 0.25);

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 dir = Vec3::Zero();  // unit, world frame
};

// World ray through an image point (u, v already in pixel-center units).
Ray pixel_ray(double u, double v, const CameraPose& pose, const Intrinsics& intr);

// Midpoint of the closest approach between two rays; false when they are too
// close to parallel for the system to be well conditioned.
bool triangulate_midpoint(const Ray& a, const Ray& b, Vec3& out);

struct SampleRequest {
    std::string mode = "v2v";  // v2v | i2v | t2v
    int steps = 50;
    uint64_t seed = 0;
    // Forward-noise level applied to the kept condition frames; 0 = clean.
    double condition_noise_t = 0.0;
};

// Conditional generation. `source_pixels` is a [f,c,h,w] video in [0,1]
// (ignored for t2v; only frame 0 is kept for i2v), `cams` the [f,12]
// normalized target poses. Returns a [f,c,h,w] video clamped into [0,1].
Tensor generate(const model::Model& m, const Tensor& source_pixels, const Tensor& cams,
                const std::vector<int>& desc, const SampleRequest& req);

struct VideoRow {
    uint64_t scene = 0;
    int source_cam = -1;  // -1 for t2v
    int target_cam = -1;
    std::string mode;
    double psnr_db = 0.0;
    double first_frame_psnr = -1.0;  // i2v: generated frame 0 vs condition frame
    double reproj_px = -1.0;         // -1 when nothing was detected
    double sync_px = -1.0;
    int detected = 0;  // primitive-frames found by the segmenter
    int total = 0;     // primitive-frames visible in the reference render
    bool untrained_mode = false;  // sampled a mode the checkpoint never trained
};

struct EvalReport {
    std::vector<VideoRow> rows;
    std::map<std::string, double> aggregates;
    std::map<std::string, std::string> meta;
};

// Mean/median per metric over the rows that carry it.
std::map<std::string, double> aggregate(const std::vector<VideoRow>& rows);

// report.json + report.csv under dir (stem replaces "report").
void write_report(const EvalReport& report, const std::string& dir,
                  const std::string& stem = "report");
EvalReport read_report(const std::string& json_path);

struct EvalOptions {
    std::string split = "test";
    int max_scenes = 0;  // 0 = whole split
    int steps = 50;
    uint64_t seed = 0;
    double condition_noise_t = 0.0;
    // Carried from checkpoint metadata; false flags t2v/i2v rows untrained.
    bool checkpoint_mode_drop = true;
    std::string dump_dir;  // PNG strips of generated videos when set
};

// Oracle scoring of one generated target-camera video against the scene's
// ground truth. `sync_cam` is the view used as the synchronization witness.
VideoRow score_video(const dataset::SceneRecord& rec, int source_cam, int target_cam,
                     int sync_cam, const Tensor& generated, const std::string& mode);

// Held-out v2v evaluation: for each scene a (source, target) camera pair is
// drawn, the target view generated, and oracle metrics computed.
EvalReport eval_v2v(const model::Model& m, const std::string& data_root,
                    const EvalOptions& opt);

// Same scene/pair selection but samples all of t2v, i2v (first frame of the
// target camera itself, identity-start trajectory), and v2v per scene.
EvalReport eval_modes(const model::Model& m, const std::string& data_root,
                      const EvalOptions& opt);

struct AblationRow {
    std::string label;
    uint64_t seed = 0;  // aggregates over seeds use the row count instead
    int steps = 0;
    double mean_psnr = 0.0;
    double mean_reproj = -1.0;
    double mean_sync = -1.0;
    bool untrained_mode = false;
};

struct AblationTable {
    std::string kind;  // conditioning | training
    std::vector<AblationRow> rows;  // one per variant, seed-averaged
    std::vector<AblationRow> runs;  // one per (variant, seed)
    std::map<std::string, std::string> meta;
};

void write_table(const AblationTable& table, const std::string& dir,
                 const std::string& stem = "ablation");

struct AblationOptions {
    train::TrainConfig train;  // shared budget/model/data settings
    int pretrain_steps = 300;
    int finetune_steps = 300;
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::string base_checkpoint;  // reuse an existing pretrain base when set
    std::string out_dir;
    EvalOptions eval;
};

// Conditioning comparison: fine-tunes the three source-injection variants
// from one shared base at equal budgets and evaluates each, plus a
// copy-source trivial baseline row.
AblationTable ablate_conditioning(const AblationOptions& opt);

// Training-strategy comparison: freeze policy x mode dropping, four runs
// from one shared base. Each run's checkpoint lands under out_dir.
AblationTable ablate_training(const AblationOptions& opt);

}  // namespace camflow::eval
