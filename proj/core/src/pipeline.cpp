#include "bistnet/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "bistnet/autograd.hpp"
#include "bistnet/correspondence.hpp"
#include "bistnet/image_io.hpp"
#include "bistnet/ops.hpp"
#include "bistnet/parallel.hpp"
#include "bistnet/priors.hpp"

namespace bistnet::pipeline {

namespace fs = std::filesystem;

namespace {

std::size_t round_up4(std::size_t n) { return (n + 3) / 4 * 4; }

Tensor pad4(const Tensor& x) {
  const std::size_t dh = round_up4(x.dim(0)) - x.dim(0), dw = round_up4(x.dim(1)) - x.dim(1);
  return (dh || dw) ? ops::pad_replicate(x, 0, dh, 0, dw) : x;
}

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  if (x.dim(0) == h && x.dim(1) == w) return x;
  return ops::slice(ops::slice(x, 0, 0, h), 1, 0, w);
}

std::optional<fs::path> if_exists(const std::optional<fs::path>& dir, fs::path (*name)(const fs::path&, const std::string&),
                                  const std::string& id) {
  if (!dir) return std::nullopt;
  fs::path p = name(*dir, id);
  return fs::exists(p) ? std::optional<fs::path>(p) : std::nullopt;
}

// Coarsest feature map for an image, from exported files or the built-in extractor.
Tensor feature_map(const Tensor& luminance, const std::string& id, const features::ExtractorWeights& extractor,
                   const std::optional<fs::path>& features_dir) {
  if (features_dir) {
    std::vector<fs::path> files;
    const std::string prefix = id + "_L";
    for (const auto& e : fs::directory_iterator(*features_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".btsr") files.push_back(e.path());
    }
    if (files.empty()) throw Error("no exported features for " + id + " in " + features_dir->string());
    std::sort(files.begin(), files.end());
    return features::import_pyramid(files, luminance.dim(0), luminance.dim(1)).coarsest().map;
  }
  return features::extract_luminance(pad4(luminance), extractor).coarsest().map;
}

struct Reference {
  Tensor features;
  Tensor ab_small;  // reference ab on the feature grid
};

Reference prepare_reference(const color::LabImage& ref, const std::string& id, const Model& model,
                            const std::optional<fs::path>& features_dir) {
  Reference r;
  r.features = feature_map(ref.L, id, model.extractor, features_dir);
  r.ab_small = ops::resize_bilinear(pad4(ref.ab.to(DType::f32)), r.features.dim(0), r.features.dim(1));
  return r;
}

Tensor warp_from(const Tensor& src_features, const Reference& ref, const RunConfig& config, std::size_t h,
                 std::size_t w) {
  const corr::CorrespondenceMatrix c = corr::build_correspondence(src_features, ref.features, config.correspondence);
  return corr::upsample_warp(corr::warp_colors(c, ref.ab_small), h, w);
}

struct Prior {
  Tensor w_f, w_b, p;  // padded frame resolution
  btfb::FusionWeights weights;
  priors::PriorMasks masks;  // padded
  priors::PriorMasks masks_full;  // frame resolution
  Tensor input;
};

// Everything ahead of the refinement network for frame t.
Prior front_end(const Tensor& luminance, const std::string& id, std::size_t t, std::size_t n, const Reference& ref_f,
                const std::optional<Reference>& ref_b, const Model& model, const RunConfig& config,
                const std::optional<fs::path>& features_dir, const std::optional<fs::path>& priors_dir) {
  const std::size_t hp = round_up4(luminance.dim(0)), wp = round_up4(luminance.dim(1));
  const Tensor src = feature_map(luminance, id, model.extractor, features_dir);
  Prior out;
  out.w_f = warp_from(src, ref_f, config, hp, wp);
  if (ref_b) {
    out.w_b = warp_from(src, *ref_b, config, hp, wp);
    out.weights = btfb::temporal_weights(t, n, config.btfb_equation_literal);
    out.p = btfb::fuse(out.w_f, out.w_b, out.weights);
  } else {
    out.weights = btfb::FusionWeights{1.0, 0.0, t, n};
    out.p = out.w_f;
  }
  out.masks_full = priors::load_masks(if_exists(priors_dir, priors::seg_file, id),
                                      if_exists(priors_dir, priors::edge_file, id), luminance, config.msrb.c_seg);
  out.masks = out.masks_full;
  out.masks.seg = pad4(out.masks_full.seg);
  out.masks.edge = pad4(out.masks_full.edge);
  out.input = msrb::assemble_input(pad4(luminance), out.p, out.masks);
  return out;
}

color::LabImage lab_of(const Tensor& rgb) {
  color::LabImage lab = color::rgb_to_lab(rgb);
  return {lab.L.to(DType::f32), lab.ab.to(DType::f32)};
}

std::string stem(const fs::path& p) { return p.stem().string(); }

Model with_leaf_parameters(const Model& model, std::map<std::string, Tensor>& leaves) {
  Model out = model;
  for (const auto& [name, p] : model.msrb.parameters()) {
    Tensor leaf = p.with_grad();
    leaves[name] = leaf;
    out.msrb.set_parameter(name, leaf);
  }
  return out;
}

}  // namespace

void Clip::validate() const {
  if (frames.size() < 2) throw Error("clip: needs at least 2 frames, got " + std::to_string(frames.size()));
  if (ids.size() != frames.size()) throw Error("clip: frame ids do not match frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].rank() != 2 || frames[i].shape() != frames.front().shape()) {
      throw ShapeError("clip: frame " + ids[i] + " has shape " + shape_str(frames[i].shape()) + ", expected " +
                       shape_str(frames.front().shape()));
    }
  }
  auto check_ref = [&](const color::LabImage& r, const std::string& name) {
    if (r.L.shape() != frames.front().shape()) {
      throw ShapeError("clip: reference " + name + " has shape " + shape_str(r.L.shape()) + ", frames are " +
                       shape_str(frames.front().shape()));
    }
  };
  check_ref(ref_f, ref_f_id);
  if (ref_b) check_ref(*ref_b, ref_b_id);
}

Clip make_clip(const std::vector<Tensor>& rgb_frames, const std::vector<std::string>& ids, const Tensor& ref_first,
               const std::optional<Tensor>& ref_last) {
  Clip clip;
  for (const Tensor& f : rgb_frames) clip.frames.push_back(color::luminance_of(f).to(DType::f32));
  clip.ids = ids;
  clip.ref_f = lab_of(ref_first);
  clip.ref_f_id = "ref_first";
  if (ref_last) {
    clip.ref_b = lab_of(*ref_last);
    clip.ref_b_id = "ref_last";
  }
  clip.validate();
  return clip;
}

Clip load_clip(const fs::path& frames_dir, const fs::path& ref_first, const std::optional<fs::path>& ref_last,
               bool resize_standard) {
  const std::vector<fs::path> files = io::list_pngs(frames_dir);
  if (files.empty()) throw Error("no PNG frames in " + frames_dir.string());
  const Tensor rf = io::read_png(ref_first);
  std::optional<Tensor> rb;
  if (ref_last) rb = io::read_png(*ref_last);
  const Shape expected = rf.shape();
  if (rb && rb->shape() != expected) {
    throw ShapeError("reference " + ref_last->filename().string() + " is " + shape_str(rb->shape()) + ", " +
                     ref_first.filename().string() + " is " + shape_str(expected));
  }
  auto fit = [&](const Tensor& rgb) {
    return resize_standard ? ops::resize_bilinear(rgb, kStandardHeight, kStandardWidth) : rgb;
  };
  std::vector<Tensor> frames;
  std::vector<std::string> ids;
  for (const fs::path& f : files) {
    const Tensor rgb = io::read_png(f);
    if (rgb.shape() != expected) {
      throw ShapeError("frame " + f.filename().string() + " is " + shape_str(rgb.shape()) + ", expected " +
                       shape_str(expected) + " like the references");
    }
    frames.push_back(fit(rgb));
    ids.push_back(stem(f));
  }
  Clip clip = make_clip(frames, ids, fit(rf), rb ? std::optional<Tensor>(fit(*rb)) : std::nullopt);
  clip.ref_f_id = stem(ref_first);
  if (ref_last) clip.ref_b_id = stem(*ref_last);
  return clip;
}

Model initialize_model(const RunConfig& config) {
  return {features::make_extractor(config.extractor_seed), msrb::MsrbModel::initialize(config.msrb, config.seed)};
}

Model zero_model(const RunConfig& config) {
  return {features::make_extractor(config.extractor_seed), msrb::MsrbModel::zeros(config.msrb)};
}

Model load_model(const fs::path& ckpt_dir, const RunConfig& config) {
  const Checkpoint ckpt = Checkpoint::load(ckpt_dir);
  features::ExtractorWeights extractor = features::has_extractor(ckpt) ? features::load_extractor(ckpt)
                                                                       : features::make_extractor(config.extractor_seed);
  return {std::move(extractor), msrb::MsrbModel::from_checkpoint(ckpt, config.msrb)};
}

void store_model(const Model& model, Checkpoint& ckpt) {
  features::store_extractor(model.extractor, ckpt);
  model.msrb.store(ckpt);
}

std::vector<FrameResult> colorize_clip(const Clip& clip, const Model& model, const RunConfig& config,
                                       const ColorizeOptions& options) {
  config.validate();
  clip.validate();
  if (model.msrb.config().c_seg != config.msrb.c_seg) throw ConfigError("model and config disagree on c_seg");
  const std::size_t n = clip.size(), h = clip.height(), w = clip.width();
  const std::size_t first = config.frame_begin.value_or(0);
  const std::size_t last = std::min(config.frame_end.value_or(n - 1), n - 1);
  if (first > last) throw ConfigError("frame range selects no frames");

  NoGradGuard no_grad;
  std::optional<Reference> cached_f, cached_b;
  auto references = [&]() -> std::pair<Reference, std::optional<Reference>> {
    Reference f = prepare_reference(clip.ref_f, clip.ref_f_id, model, options.features_dir);
    std::optional<Reference> b;
    if (clip.ref_b) b = prepare_reference(*clip.ref_b, clip.ref_b_id, model, options.features_dir);
    return {std::move(f), std::move(b)};
  };
  if (options.cache_reference_features) std::tie(cached_f, cached_b) = references();

  std::vector<FrameResult> results(last - first + 1);
  parallel_for(results.size(), [&](std::size_t k) {
    NoGradGuard guard;
    const std::size_t t = first + k;
    try {
      std::optional<Reference> ref_f = cached_f, ref_b = cached_b;
      if (!options.cache_reference_features) std::tie(ref_f, ref_b) = references();
      const Prior prior = front_end(clip.frames[t], clip.ids[t], t, n, *ref_f, ref_b, model, config,
                                    options.features_dir, options.priors_dir);
      const Tensor input = prior.input.dtype() == model.msrb.dtype() ? prior.input : prior.input.to(model.msrb.dtype());
      const Tensor z = msrb::forward(model.msrb, input).full;
      FrameResult& r = results[k];
      r.index = t;
      r.id = clip.ids[t];
      r.ab = crop(color::denormalize_ab(z), h, w).to(DType::f32);
      r.rgb = color::lab_to_rgb({clip.frames[t], r.ab});
      r.w_f = crop(prior.w_f, h, w);
      if (prior.w_b.defined()) r.w_b = crop(prior.w_b, h, w);
      r.p = crop(prior.p, h, w);
      r.weights = prior.weights;
      r.masks = prior.masks_full;
    } catch (const Error& e) {
      throw Error("frame " + clip.ids[t] + ": " + e.what());
    }
  });
  return results;
}

void write_frames(const fs::path& out_dir, const std::vector<FrameResult>& results) {
  fs::create_directories(out_dir);
  for (const FrameResult& r : results) io::write_png(out_dir / (r.id + ".png"), r.rgb);
}

TrainingClip prepare_training_clip(const std::string& name, const std::vector<Tensor>& rgb_frames,
                                   const std::vector<std::string>& ids, const Model& model, const RunConfig& config,
                                   const std::optional<fs::path>& priors_dir, const std::optional<fs::path>& flow_dir) {
  if (rgb_frames.size() < 2) throw Error("training clip " + name + ": needs at least 2 frames");
  const Clip clip = make_clip(rgb_frames, ids, rgb_frames.front(), rgb_frames.back());
  const std::size_t h = clip.height(), w = clip.width();
  if (h % 4 != 0 || w % 4 != 0) {
    throw ShapeError("training clip " + name + ": frame size " + shape_str({h, w}) + " is not a multiple of 4");
  }
  NoGradGuard no_grad;
  const Reference ref_f = prepare_reference(clip.ref_f, "ref_first", model, std::nullopt);
  const Reference ref_b = prepare_reference(*clip.ref_b, "ref_last", model, std::nullopt);
  TrainingClip out;
  out.name = name;
  out.ids = ids;
  const DType dt = model.msrb.dtype();
  for (std::size_t t = 0; t < clip.size(); ++t) {
    const Prior prior = front_end(clip.frames[t], ids[t], t, clip.size(), ref_f, ref_b, model, config, std::nullopt,
                                  priors_dir);
    out.luminance.push_back(clip.frames[t].to(dt));
    out.target_ab.push_back(color::normalize_ab(color::rgb_to_lab(rgb_frames[t]).ab.to(dt)));
    out.inputs.push_back(prior.input.to(dt));
    std::optional<Tensor> flow;
    if (flow_dir && t > 0) {
      const fs::path p = loss::flow_file(*flow_dir, ids[t]);
      if (fs::exists(p)) flow = loss::load_flow(p, h, w).to(dt);
    }
    out.flows.push_back(flow);
  }
  return out;
}

TrainResult train_model(const std::vector<TrainingClip>& clips, Model model, const RunConfig& config,
                        const TrainOptions& options) {
  config.validate();
  struct Run {
    const TrainingClip* clip;
    std::size_t begin, end;
  };
  std::vector<Run> runs;
  for (const TrainingClip& c : clips) {
    for (std::size_t b = 0; b < c.inputs.size(); b += config.batch_size) {
      runs.push_back({&c, b, std::min(b + config.batch_size, c.inputs.size())});
    }
  }
  if (runs.empty() && config.epochs > 0) throw Error("train: no training frames");

  Adam adam(config.adam);
  TrainResult result{model, {}};
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const Run& run : runs) {
      std::map<std::string, Tensor> leaves;
      std::map<std::string, Tensor> grads;
      loss::LossReport mean_report;
      {
        Tape tape;
        const Model live = with_leaf_parameters(result.model, leaves);
        Tensor total;
        Tensor prev;
        const double frames = static_cast<double>(run.end - run.begin);
        for (std::size_t t = run.begin; t < run.end; ++t) {
          const Tensor z = msrb::forward(live.msrb, run.clip->inputs[t]).full;
          loss::FrameLossInputs in;
          in.luminance = run.clip->luminance[t];
          in.pred_ab = z;
          in.target_ab = run.clip->target_ab[t];
          if (prev.defined()) {
            in.prev_pred_ab = prev;
            in.flow = run.clip->flows[t];
          }
          loss::LossReport r;
          const Tensor l = loss::total_loss(in, live.extractor, config.loss, &r);
          total = total.defined() ? ops::add(total, l) : l;
          mean_report.edge += r.edge / frames;
          mean_report.hem += r.hem / frames;
          mean_report.content += r.content / frames;
          mean_report.perceptual += r.perceptual / frames;
          mean_report.temporal += r.temporal / frames;
          mean_report.composite += r.composite / frames;
          prev = z;
        }
        total = ops::scalar_mul(total, 1.0 / frames);
        mean_report.total = total.item();
        if (!std::isfinite(mean_report.total)) {
          throw NumericError("train: non-finite loss at step " + std::to_string(step));
        }
        const GradientMap g = tape.backward(total);
        for (const auto& [name, leaf] : leaves) grads[name] = g.get_or_zeros(leaf);
      }
      StepRecord record{step, epoch, mean_report};
      result.history.push_back(record);
      if (options.on_step) options.on_step(record);
      for (const auto& [name, p] : adam.step(result.model.msrb.parameters(), grads)) {
        result.model.msrb.set_parameter(name, p);
      }
      ++step;
    }
    if (options.on_epoch) options.on_epoch(epoch, result.model, adam);
  }
  return result;
}

TrainResult train(const fs::path& data_root, const fs::path& out_dir, const RunConfig& config) {
  config.validate();
  std::vector<fs::path> clip_dirs;
  if (fs::is_directory(data_root / "gt")) {
    clip_dirs.push_back(data_root);
  } else {
    if (!fs::is_directory(data_root)) throw Error("training data root " + data_root.string() + " is not a directory");
    for (const auto& e : fs::directory_iterator(data_root)) {
      if (e.is_directory() && fs::is_directory(e.path() / "gt")) clip_dirs.push_back(e.path());
    }
    std::sort(clip_dirs.begin(), clip_dirs.end());
  }
  if (clip_dirs.empty()) throw Error("no clips with a gt/ directory under " + data_root.string());

  const Model init = initialize_model(config);
  std::vector<TrainingClip> clips;
  for (const fs::path& dir : clip_dirs) {
    std::vector<Tensor> frames;
    std::vector<std::string> ids;
    for (const fs::path& f : io::list_pngs(dir / "gt")) {
      frames.push_back(io::read_png(f));
      ids.push_back(stem(f));
    }
    auto optional_dir = [&](const char* sub) {
      return fs::is_directory(dir / sub) ? std::optional<fs::path>(dir / sub) : std::nullopt;
    };
    clips.push_back(prepare_training_clip(dir.filename().string(), frames, ids, init, config,
                                          optional_dir("priors"), optional_dir("flow")));
  }

  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "loss.csv");
  if (!csv) throw Error("cannot write " + (out_dir / "loss.csv").string());
  csv.precision(10);
  csv << "step,epoch,total,edge,hem,content,perceptual,temporal\n";

  auto save = [&](const Model& model, const Adam* adam) {
    Checkpoint ckpt;
    store_model(model, ckpt);
    if (adam) adam->store(ckpt);
    ckpt.save(out_dir / "checkpoint");
    std::ofstream(out_dir / "checkpoint" / "config.txt") << to_text(config);
  };

  TrainOptions options;
  options.on_step = [&](const StepRecord& r) {
    csv << r.step << ',' << r.epoch << ',' << r.report.total << ',' << r.report.edge << ',' << r.report.hem << ','
        << r.report.content << ',' << r.report.perceptual << ',' << r.report.temporal << '\n';
    csv.flush();
  };
  options.on_epoch = [&](std::size_t, const Model& model, const Adam& adam) { save(model, &adam); };
  TrainResult result = train_model(clips, init, config, options);
  save(result.model, nullptr);
  return result;
}

metrics::EvalReport evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const metrics::CdcOptions& cdc) {
  const std::vector<fs::path> pred = io::list_pngs(pred_dir), gt = io::list_pngs(gt_dir);
  if (pred.size() != gt.size()) {
    throw Error("eval: " + std::to_string(pred.size()) + " predicted frames vs " + std::to_string(gt.size()) +
                " ground-truth frames");
  }
  std::vector<std::string> ids;
  std::vector<Tensor> p, g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].filename() != gt[i].filename()) {
      throw Error("eval: frame sets differ at " + pred[i].filename().string() + " vs " + gt[i].filename().string());
    }
    ids.push_back(stem(pred[i]));
    p.push_back(io::read_png(pred[i]));
    g.push_back(io::read_png(gt[i]));
  }
  return metrics::evaluate(ids, p, g, cdc);
}

}  // namespace bistnet::pipeline
