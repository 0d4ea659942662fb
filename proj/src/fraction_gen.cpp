#include "mf/fraction_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "mf/parallel.hpp"

namespace mf {

std::string structure_name(Structure s) {
    switch (s) {
        case Structure::Digit: return "digit";
        case Structure::F11: return "F11";
        case Structure::F12: return "F12";
        case Structure::F22: return "F22";
    }
    throw GenError("bad structure enum");
}

Structure structure_from_name(const std::string& name) {
    if (name == "digit") return Structure::Digit;
    if (name == "F11") return Structure::F11;
    if (name == "F12") return Structure::F12;
    if (name == "F22") return Structure::F22;
    throw GenError("unknown structure name: " + name);
}

namespace {

std::pair<size_t, size_t> structure_arity(Structure s) {
    switch (s) {
        case Structure::F11: return {1, 1};
        case Structure::F12: return {1, 2};
        case Structure::F22: return {2, 2};
        default: throw GenError("structure_arity: not a fraction structure");
    }
}

}  // namespace

void FractionSpec::validate() const {
    const auto [nn, nd] = structure_arity(structure);
    if (numerator_digits.size() != nn || denominator_digits.size() != nd)
        throw GenError("FractionSpec: digit lists do not match structure arity");
    for (int d : numerator_digits)
        if (d < 1 || d > 9) throw GenError("FractionSpec: numerator digit outside 1..9");
    for (int d : denominator_digits)
        if (d < 1 || d > 9) throw GenError("FractionSpec: denominator digit outside 1..9");
    if (spacing_px < 0) throw GenError("FractionSpec: spacing must be >= 0");
    if (bar_overhang_px < 0) throw GenError("FractionSpec: overhang must be >= 0");
    if (bar_thickness_px < 4) throw GenError("FractionSpec: bar thickness must be >= 4");
}

void GenerationConfig::validate() const {
    if (digits_per_class < 0 || f11_count < 0 || f12_count < 0 || f22_count < 0)
        throw GenError("GenerationConfig: counts must be >= 0");
    if (canvas < 40) throw GenError("GenerationConfig: canvas must be >= 40");
    if (spacing_min < 0 || spacing_max < spacing_min)
        throw GenError("GenerationConfig: bad spacing range");
    if (jitter_max < 0) throw GenError("GenerationConfig: jitter_max must be >= 0");
    if (bar_thickness < 4) throw GenError("GenerationConfig: bar thickness must be >= 4");
    if (overhang_min < 0 || overhang_max < overhang_min)
        throw GenError("GenerationConfig: bad overhang range");
}

GenerationConfig GenerationConfig::desk_preset() {
    GenerationConfig cfg;
    cfg.digits_per_class = 1000;
    cfg.f11_count = 334;
    cfg.f12_count = 333;
    cfg.f22_count = 333;
    return cfg;
}

GenerationConfig GenerationConfig::paper_preset() {
    GenerationConfig cfg;
    cfg.digits_per_class = 9371;
    cfg.f11_count = 3124;
    cfg.f12_count = 3123;
    cfg.f22_count = 3123;
    return cfg;
}

GenerationConfig generation_config_from_json(const nlohmann::json& j) {
    GenerationConfig cfg;
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "desk")
            cfg = GenerationConfig::desk_preset();
        else if (p == "paper")
            cfg = GenerationConfig::paper_preset();
        else
            throw GenError("unknown preset: " + p);
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("digits_per_class", cfg.digits_per_class);
    get("f11", cfg.f11_count);
    get("f12", cfg.f12_count);
    get("f22", cfg.f22_count);
    get("master_seed", cfg.master_seed);
    get("canvas", cfg.canvas);
    get("spacing_min", cfg.spacing_min);
    get("spacing_max", cfg.spacing_max);
    get("jitter_max", cfg.jitter_max);
    get("bar_thickness", cfg.bar_thickness);
    get("overhang_min", cfg.overhang_min);
    get("overhang_max", cfg.overhang_max);
    get("exhaustive_f11", cfg.exhaustive_f11);
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json generation_config_to_json(const GenerationConfig& cfg) {
    nlohmann::ordered_json j;
    j["digits_per_class"] = cfg.digits_per_class;
    j["f11"] = cfg.f11_count;
    j["f12"] = cfg.f12_count;
    j["f22"] = cfg.f22_count;
    j["master_seed"] = cfg.master_seed;
    j["canvas"] = cfg.canvas;
    j["spacing_min"] = cfg.spacing_min;
    j["spacing_max"] = cfg.spacing_max;
    j["jitter_max"] = cfg.jitter_max;
    j["bar_thickness"] = cfg.bar_thickness;
    j["overhang_min"] = cfg.overhang_min;
    j["overhang_max"] = cfg.overhang_max;
    j["exhaustive_f11"] = cfg.exhaustive_f11;
    return j;
}

DigitPool DigitPool::build(const IdxTensor& images, std::span<const uint8_t> labels) {
    if (images.dims.size() != 3 || images.dims[1] != 28 || images.dims[2] != 28)
        throw GenError("DigitPool: images must be [N,28,28]");
    if (labels.size() != images.dims[0])
        throw GenError("DigitPool: label count does not match image count");
    DigitPool pool;
    pool.images = &images;
    for (uint32_t i = 0; i < labels.size(); ++i)
        if (labels[i] <= 9) pool.by_digit[labels[i]].push_back(i);
    return pool;
}

const std::vector<uint32_t>& DigitPool::require(int digit) const {
    if (digit < 0 || digit > 9 || by_digit[digit].empty())
        throw PoolMissingDigit("digit pool has no exemplars for digit " + std::to_string(digit));
    return by_digit[digit];
}

GrayImage make_fraction_bar(const GrayImage& one_exemplar, int bar_width, int bar_thickness) {
    if (bar_width < 8 || bar_thickness < 4)
        throw GenError("make_fraction_bar: bar_width >= 8 and bar_thickness >= 4 required");
    if (count_nonzero(one_exemplar) < 20)
        throw DegenerateExemplar("make_fraction_bar: exemplar has fewer than 20 nonzero pixels");
    GrayImage t = transpose(one_exemplar);
    const auto box = ink_bbox(t);
    t = crop(t, *box);
    return resize(t, bar_width, bar_thickness, ResizeMethod::Bilinear);
}

namespace {

constexpr int kCell = 28;      // MNIST exemplar side
constexpr int kMargin = 4;     // border of the working canvas
constexpr int kBaseGap = 6;    // nominal cell gap around the bar

long fold_digits(const std::vector<int>& digits) {
    long v = 0;
    for (int d : digits) v = v * 10 + d;
    return v;
}

Box shift_box(const Box& b, int dx, int dy) {
    return {b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy};
}

Box union_box(const Box& a, const Box& b) {
    if (!a.valid()) return b;
    if (!b.valid()) return a;
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
            std::max(a.y1, b.y1)};
}

// Maps a working-canvas box into final-canvas coordinates.
Box map_box(const Box& b, double sx, double sy, int scaled_w, int scaled_h, int ox, int oy) {
    if (!b.valid()) return b;
    Box out;
    out.x0 = std::clamp(static_cast<int>(std::floor(b.x0 * sx)), 0, scaled_w - 1) + ox;
    out.y0 = std::clamp(static_cast<int>(std::floor(b.y0 * sy)), 0, scaled_h - 1) + oy;
    out.x1 = std::clamp(static_cast<int>(std::ceil((b.x1 + 1) * sx)) - 1, 0, scaled_w - 1) + ox;
    out.y1 = std::clamp(static_cast<int>(std::ceil((b.y1 + 1) * sy)) - 1, 0, scaled_h - 1) + oy;
    return out;
}

}  // namespace

std::pair<GrayImage, SampleRecord> generate_fraction(const FractionSpec& spec,
                                                     const DigitPool& pool, Rng& rng,
                                                     int canvas) {
    spec.validate();
    if (canvas < 40) throw GenError("generate_fraction: canvas must be >= 40");

    SampleRecord rec;
    rec.class_label = 10;
    rec.structure = spec.structure;
    rec.sample_seed = spec.sample_seed;
    rec.numerator = fold_digits(spec.numerator_digits);
    rec.denominator = fold_digits(spec.denominator_digits);
    rec.value = std::to_string(rec.numerator) + "/" + std::to_string(rec.denominator);

    // exemplar draws: numerator L->R, denominator L->R, bar
    std::vector<GrayImage> num_imgs, den_imgs;
    for (int d : spec.numerator_digits) {
        const auto& ids = pool.require(d);
        const uint32_t idx = ids[rng.bounded(ids.size())];
        rec.exemplar_indices.push_back(idx);
        num_imgs.push_back(pool.exemplar(idx));
    }
    for (int d : spec.denominator_digits) {
        const auto& ids = pool.require(d);
        const uint32_t idx = ids[rng.bounded(ids.size())];
        rec.exemplar_indices.push_back(idx);
        den_imgs.push_back(pool.exemplar(idx));
    }
    const auto& ones = pool.require(1);
    const uint32_t bar_idx = ones[rng.bounded(ones.size())];
    rec.exemplar_indices.push_back(bar_idx);

    auto row_width = [&](size_t n) {
        return static_cast<int>(n) * kCell + spec.spacing_px * (static_cast<int>(n) - 1);
    };
    const int num_w = row_width(num_imgs.size());
    const int den_w = row_width(den_imgs.size());
    const int max_row = std::max(num_w, den_w);

    // bar ink must span both digit rows; widen if the resize thinned the ends
    int bar_w = max_row + 2 * spec.bar_overhang_px;
    GrayImage bar = make_fraction_bar(pool.exemplar(bar_idx), bar_w, spec.bar_thickness_px);
    for (int tries = 0; tries < 4; ++tries) {
        const auto bb = ink_bbox(bar);
        if (bb && bb->width() >= max_row) break;
        bar_w += 2;
        bar = make_fraction_bar(pool.exemplar(bar_idx), bar_w, spec.bar_thickness_px);
    }

    const int W = std::max(bar_w, max_row) + 2 * kMargin;
    const auto& jit = spec.jitter;

    // vertical stacking; the max() floors keep at least 1px of cell gap
    const int y_num = std::max(0, kMargin + jit[0][1]);
    const int y_bar = std::max(y_num + kCell + 1, kMargin + kCell + kBaseGap + jit[1][1]);
    const int y_den = std::max(y_bar + spec.bar_thickness_px + 1,
                               kMargin + kCell + kBaseGap + spec.bar_thickness_px + kBaseGap +
                                   jit[2][1]);
    const int H = y_den + kCell + kMargin;

    const int x_num = std::clamp((W - num_w) / 2 + jit[0][0], 0, W - num_w);
    const int x_bar = std::clamp((W - bar_w) / 2 + jit[1][0], 0, W - bar_w);
    const int x_den = std::clamp((W - den_w) / 2 + jit[2][0], 0, W - den_w);

    GrayImage work(W, H, 0);
    std::vector<Box> num_cells, den_cells;
    Box num_ink, den_ink;
    for (size_t i = 0; i < num_imgs.size(); ++i) {
        const int x = x_num + static_cast<int>(i) * (kCell + spec.spacing_px);
        work = paste_max(work, num_imgs[i], x, y_num);
        num_cells.push_back({x, y_num, x + kCell - 1, y_num + kCell - 1});
        if (const auto bb = ink_bbox(num_imgs[i])) num_ink = union_box(num_ink, shift_box(*bb, x, y_num));
    }
    for (size_t i = 0; i < den_imgs.size(); ++i) {
        const int x = x_den + static_cast<int>(i) * (kCell + spec.spacing_px);
        work = paste_max(work, den_imgs[i], x, y_den);
        den_cells.push_back({x, y_den, x + kCell - 1, y_den + kCell - 1});
        if (const auto bb = ink_bbox(den_imgs[i])) den_ink = union_box(den_ink, shift_box(*bb, x, y_den));
    }
    work = paste_max(work, bar, x_bar, y_bar);
    Box bar_ink_box;
    if (const auto bb = ink_bbox(bar)) bar_ink_box = shift_box(*bb, x_bar, y_bar);

    // fit into the final canvas, aspect preserved, inversion last
    const double s = std::min({1.0, static_cast<double>(canvas) / W,
                               static_cast<double>(canvas) / H});
    if (s < 0.2)
        throw LayoutOverflow("generate_fraction: content would shrink below 20% (" +
                             std::to_string(W) + "x" + std::to_string(H) + ")");
    GrayImage scaled = work;
    if (s < 1.0) {
        const int sw = std::clamp(static_cast<int>(std::llround(W * s)), 1, canvas);
        const int sh = std::clamp(static_cast<int>(std::llround(H * s)), 1, canvas);
        scaled = resize(work, sw, sh, ResizeMethod::Bilinear);
    }
    const int ox = (canvas - scaled.width) / 2;
    const int oy = (canvas - scaled.height) / 2;
    GrayImage final_img = invert(pad_center(scaled, canvas, canvas, 0));

    auto& lay = rec.layout;
    lay.work_w = W;
    lay.work_h = H;
    lay.spacing_px = spec.spacing_px;
    lay.bar_overhang_px = spec.bar_overhang_px;
    lay.bar_thickness_px = spec.bar_thickness_px;
    lay.jitter = spec.jitter;
    lay.scale = s;
    lay.off_x = ox;
    lay.off_y = oy;
    lay.num_ink = num_ink;
    lay.bar_ink = bar_ink_box;
    lay.den_ink = den_ink;

    const double sx = static_cast<double>(scaled.width) / W;
    const double sy = static_cast<double>(scaled.height) / H;
    lay.bar_ink_final = map_box(bar_ink_box, sx, sy, scaled.width, scaled.height, ox, oy);
    for (const auto& c : num_cells)
        lay.num_cells_final.push_back(map_box(c, sx, sy, scaled.width, scaled.height, ox, oy));
    for (const auto& c : den_cells)
        lay.den_cells_final.push_back(map_box(c, sx, sy, scaled.width, scaled.height, ox, oy));

    return {std::move(final_img), std::move(rec)};
}

std::pair<GrayImage, SampleRecord> generate_fraction(const FractionSpec& spec,
                                                     const DigitPool& pool, int canvas) {
    Rng rng(spec.sample_seed);
    return generate_fraction(spec, pool, rng, canvas);
}

GeneratedDataset generate_dataset(const GenerationConfig& cfg, const IdxTensor& mnist_images,
                                  std::span<const uint8_t> mnist_labels, uint64_t master_seed,
                                  int jobs) {
    cfg.validate();
    const DigitPool pool = DigitPool::build(mnist_images, mnist_labels);
    const size_t n_total = static_cast<size_t>(cfg.total());
    const size_t n_digits = static_cast<size_t>(10) * cfg.digits_per_class;
    const int canvas = cfg.canvas;

    GeneratedDataset out;
    out.images.dims = {static_cast<uint32_t>(n_total), static_cast<uint32_t>(canvas),
                       static_cast<uint32_t>(canvas)};
    out.images.data.resize(n_total * canvas * canvas);
    out.labels.dims = {static_cast<uint32_t>(n_total)};
    out.labels.data.resize(n_total);
    out.manifest.resize(n_total);

    std::exception_ptr first_error;
    std::mutex error_mutex;

    parallel_for(n_total, jobs, [&](size_t k) {
        try {
            const uint64_t seed_k = mix_seed(master_seed, k);
            Rng rng(seed_k);
            GrayImage img;
            SampleRecord rec;

            if (k < n_digits) {
                const int digit = static_cast<int>(k / cfg.digits_per_class);
                const auto& ids = pool.require(digit);
                const uint32_t idx = ids[rng.bounded(ids.size())];
                img = invert(pad_center(pool.exemplar(idx), canvas, canvas, 0));
                rec.class_label = digit;
                rec.structure = Structure::Digit;
                rec.numerator = digit;
                rec.denominator = 1;
                rec.value = std::to_string(digit);
                rec.exemplar_indices = {idx};
                rec.layout.work_w = kCell;
                rec.layout.work_h = kCell;
                rec.layout.scale = 1.0;
                rec.layout.off_x = (canvas - kCell) / 2;
                rec.layout.off_y = (canvas - kCell) / 2;
                rec.layout.num_cells_final.push_back({rec.layout.off_x, rec.layout.off_y,
                                                      rec.layout.off_x + kCell - 1,
                                                      rec.layout.off_y + kCell - 1});
            } else {
                const size_t fk = k - n_digits;
                FractionSpec spec;
                size_t ordinal = fk;
                if (fk < static_cast<size_t>(cfg.f11_count)) {
                    spec.structure = Structure::F11;
                } else if (fk < static_cast<size_t>(cfg.f11_count) + cfg.f12_count) {
                    spec.structure = Structure::F12;
                    ordinal = fk - cfg.f11_count;
                } else {
                    spec.structure = Structure::F22;
                    ordinal = fk - cfg.f11_count - cfg.f12_count;
                }
                spec.sample_seed = seed_k;
                const auto [nn, nd] = structure_arity(spec.structure);
                if (spec.structure == Structure::F11 && cfg.exhaustive_f11) {
                    const int pair_idx = static_cast<int>(ordinal % 81);
                    spec.numerator_digits = {1 + pair_idx / 9};
                    spec.denominator_digits = {1 + pair_idx % 9};
                } else {
                    for (size_t i = 0; i < nn; ++i)
                        spec.numerator_digits.push_back(static_cast<int>(rng.uniform_int(1, 9)));
                    for (size_t i = 0; i < nd; ++i)
                        spec.denominator_digits.push_back(static_cast<int>(rng.uniform_int(1, 9)));
                }
                spec.spacing_px = static_cast<int>(rng.uniform_int(cfg.spacing_min, cfg.spacing_max));
                for (auto& part : spec.jitter) {
                    part[0] = static_cast<int>(rng.uniform_int(-cfg.jitter_max, cfg.jitter_max));
                    part[1] = static_cast<int>(rng.uniform_int(-cfg.jitter_max, cfg.jitter_max));
                }
                spec.bar_overhang_px =
                    static_cast<int>(rng.uniform_int(cfg.overhang_min, cfg.overhang_max));
                spec.bar_thickness_px = cfg.bar_thickness;
                auto [im, r] = generate_fraction(spec, pool, rng, canvas);
                img = std::move(im);
                rec = std::move(r);
            }

            rec.id = k;
            rec.sample_seed = seed_k;
            std::copy(img.pixels.begin(), img.pixels.end(),
                      out.images.data.begin() + k * static_cast<size_t>(canvas) * canvas);
            out.labels.data[k] = static_cast<uint8_t>(rec.class_label);
            out.manifest[k] = std::move(rec);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    });

    if (first_error) std::rethrow_exception(first_error);
    return out;
}

namespace {

nlohmann::ordered_json box_to_json(const Box& b) {
    if (!b.valid()) return nullptr;
    return nlohmann::ordered_json::array({b.x0, b.y0, b.x1, b.y1});
}

Box box_from_json(const nlohmann::json& j) {
    if (j.is_null()) return Box{};
    return Box{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

std::string record_to_jsonl(const SampleRecord& rec) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["label"] = rec.class_label;
    j["structure"] = structure_name(rec.structure);
    j["numerator"] = rec.numerator;
    j["denominator"] = rec.denominator;
    j["value"] = rec.value;
    j["exemplars"] = rec.exemplar_indices;

    nlohmann::ordered_json lay;
    lay["work_w"] = rec.layout.work_w;
    lay["work_h"] = rec.layout.work_h;
    lay["spacing"] = rec.layout.spacing_px;
    lay["overhang"] = rec.layout.bar_overhang_px;
    lay["bar_thickness"] = rec.layout.bar_thickness_px;
    lay["jitter"] = rec.layout.jitter;
    lay["scale"] = rec.layout.scale;
    lay["off"] = {rec.layout.off_x, rec.layout.off_y};
    lay["num_box"] = box_to_json(rec.layout.num_ink);
    lay["bar_box"] = box_to_json(rec.layout.bar_ink);
    lay["den_box"] = box_to_json(rec.layout.den_ink);
    lay["bar_box_final"] = box_to_json(rec.layout.bar_ink_final);
    auto cells = nlohmann::ordered_json::array();
    for (const auto& c : rec.layout.num_cells_final) cells.push_back(box_to_json(c));
    lay["num_cells_final"] = cells;
    cells = nlohmann::ordered_json::array();
    for (const auto& c : rec.layout.den_cells_final) cells.push_back(box_to_json(c));
    lay["den_cells_final"] = cells;
    j["layout"] = lay;
    j["seed"] = rec.sample_seed;
    return j.dump();
}

SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord rec;
    rec.id = j.at("id").get<uint64_t>();
    rec.class_label = j.at("label").get<int>();
    rec.structure = structure_from_name(j.at("structure").get<std::string>());
    rec.numerator = j.at("numerator").get<long>();
    rec.denominator = j.at("denominator").get<long>();
    rec.value = j.at("value").get<std::string>();
    rec.exemplar_indices = j.at("exemplars").get<std::vector<uint32_t>>();
    const auto& lay = j.at("layout");
    rec.layout.work_w = lay.at("work_w").get<int>();
    rec.layout.work_h = lay.at("work_h").get<int>();
    rec.layout.spacing_px = lay.value("spacing", 0);
    rec.layout.bar_overhang_px = lay.value("overhang", 0);
    rec.layout.bar_thickness_px = lay.value("bar_thickness", 0);
    if (lay.contains("jitter")) {
        for (int p = 0; p < 3; ++p)
            for (int a = 0; a < 2; ++a) rec.layout.jitter[p][a] = lay["jitter"][p][a].get<int>();
    }
    rec.layout.scale = lay.at("scale").get<double>();
    rec.layout.off_x = lay.at("off")[0].get<int>();
    rec.layout.off_y = lay.at("off")[1].get<int>();
    rec.layout.num_ink = box_from_json(lay.at("num_box"));
    rec.layout.bar_ink = box_from_json(lay.at("bar_box"));
    rec.layout.den_ink = box_from_json(lay.at("den_box"));
    rec.layout.bar_ink_final = box_from_json(lay.at("bar_box_final"));
    for (const auto& c : lay.at("num_cells_final")) rec.layout.num_cells_final.push_back(box_from_json(c));
    for (const auto& c : lay.at("den_cells_final")) rec.layout.den_cells_final.push_back(box_from_json(c));
    rec.sample_seed = j.at("seed").get<uint64_t>();
    return rec;
}

void write_manifest(const std::string& path, std::span<const SampleRecord> manifest) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw GenError("cannot open " + path + " for writing");
    for (const auto& rec : manifest) f << record_to_jsonl(rec) << '\n';
    if (!f) throw GenError("short write on " + path);
}

std::vector<SampleRecord> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GenError("cannot open " + path);
    std::vector<SampleRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace mf
