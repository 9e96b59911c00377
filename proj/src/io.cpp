#include "igg/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace igg {

namespace {

[[noreturn]] void parse_fail(std::string_view name, std::size_t offset, const std::string& what) {
    throw ParseError(std::string(name) + ": byte " + std::to_string(offset) + ": " + what);
}

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Reads one header integer, skipping whitespace and comments.
long header_int(std::span<const std::uint8_t> b, std::size_t& pos, std::string_view name, const char* what,
                std::size_t* token_start = nullptr) {
    while (pos < b.size()) {
        if (is_space(b[pos])) {
            ++pos;
        } else if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n')
                ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size())
        parse_fail(name, pos, std::string("unexpected end of header, expected ") + what);
    const std::size_t start = pos;
    if (token_start)
        *token_start = start;
    long value = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        value = value * 10 + (b[pos] - '0');
        if (value > 1000000)
            parse_fail(name, start, std::string(what) + " is too large");
        ++pos;
    }
    if (pos == start)
        parse_fail(name, start, std::string("expected ") + what + ", found '" + static_cast<char>(b[start]) + "'");
    return value;
}

class Writer {
  public:
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    template <class T>
    void put(T v) {
        using U = std::make_unsigned_t<T>;
        const U u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            out_.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
    }
    void f64(double v) { put<std::uint64_t>(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t>& data() { return out_; }

  private:
    std::vector<std::uint8_t> out_;
};

class Reader {
  public:
    Reader(std::span<const std::uint8_t> b, std::string_view name, std::size_t pos = 0, std::size_t end = SIZE_MAX)
        : b_(b), name_(name), pos_(pos), end_(std::min(end, b.size())) {}
    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(b_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    double f64(const char* what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }
    std::string tag(std::size_t n, const char* what) {
        need(n, what);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    [[noreturn]] void fail(const std::string& what) const { parse_fail(name_, pos_, what); }

  private:
    void need(std::size_t n, const char* what) const {
        if (pos_ + n > end_) {
            parse_fail(name_, pos_, std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes, " +
                                        std::to_string(end_ - pos_) + " available");
        }
    }
    std::span<const std::uint8_t> b_;
    std::string_view name_;
    std::size_t pos_;
    std::size_t end_;
};

std::string escape_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError(where + ": '" + s + "' is not a number");
    return v;
}

} // namespace

ScalarField pgm_decode(std::span<const std::uint8_t> bytes, std::string_view name) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        parse_fail(name, 0, "missing P5 magic number");
    std::size_t pos = 2;
    if (pos < bytes.size() && !is_space(bytes[pos]) && bytes[pos] != '#')
        parse_fail(name, pos, "expected whitespace after magic number");
    std::size_t dims_at = 0, maxval_at = 0;
    const long width = header_int(bytes, pos, name, "width", &dims_at);
    const long height = header_int(bytes, pos, name, "height");
    const long maxval = header_int(bytes, pos, name, "maxval", &maxval_at);
    if (maxval != 255 && maxval != 65535)
        parse_fail(name, maxval_at, "maxval " + std::to_string(maxval) + " unsupported (255 or 65535)");
    if (pos >= bytes.size() || !is_space(bytes[pos]))
        parse_fail(name, pos, "expected a single whitespace byte before pixel data");
    ++pos;
    Grid grid = [&] {
        try {
            return Grid(static_cast<int>(width), static_cast<int>(height));
        } catch (const ConfigError& e) {
            parse_fail(name, dims_at, std::string("unsupported dimensions: ") + e.what());
        }
    }();
    const std::size_t bpp = maxval == 255 ? 1 : 2;
    const std::size_t expected = grid.size() * bpp;
    const std::size_t actual = bytes.size() - pos;
    if (actual < expected) {
        parse_fail(name, pos, "truncated pixel data: expected " + std::to_string(expected) + " bytes, found " +
                                  std::to_string(actual));
    }
    ScalarField s(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const unsigned v = bpp == 1 ? bytes[pos + i] : (unsigned(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
        s[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return s;
}

std::vector<std::uint8_t> pgm_encode(const ScalarField& s, int maxval) {
    if (maxval != 255 && maxval != 65535)
        throw ConfigError("pgm maxval must be 255 or 65535");
    const std::string header =
        "P5\n" + std::to_string(s.grid().nx) + " " + std::to_string(s.grid().ny) + "\n" + std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i]))
            throw NumericError("pgm: non-finite intensity at index " + std::to_string(i));
        const double q = std::round(std::clamp(s[i], 0.0, 1.0) * maxval);
        const auto v = static_cast<unsigned>(q);
        if (maxval == 255) {
            out.push_back(static_cast<std::uint8_t>(v));
        } else {
            out.push_back(static_cast<std::uint8_t>(v >> 8));
            out.push_back(static_cast<std::uint8_t>(v & 0xff));
        }
    }
    return out;
}

ScalarField pgm_read(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    return pgm_decode(bytes, path.string());
}

void pgm_write(const ScalarField& s, const std::filesystem::path& path, int maxval) {
    write_file(path, pgm_encode(s, maxval));
}

std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string text;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i)
                text += ',';
            text += escape_csv(fields[i]);
        }
        text += '\n';
    };
    line(header);
    for (const auto& r : rows)
        line(r);
    write_text(path, text);
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (first) {
            t.header = split_csv_line(line);
            first = false;
        } else {
            t.rows.push_back(split_csv_line(line));
        }
    }
    if (first)
        throw ParseError(path.string() + ": empty CSV file");
    return t;
}

void write_velocity_csv(const VectorField& v, const std::filesystem::path& path) {
    const Grid& g = v.grid();
    std::vector<std::vector<std::string>> rows;
    rows.reserve(g.size());
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            rows.push_back({std::to_string(ix), std::to_string(iy), format_double(v.x().at(ix, iy)),
                            format_double(v.y().at(ix, iy))});
    write_csv(path, {"ix", "iy", "vx", "vy"}, rows);
}

VectorField read_velocity_csv(const Grid& grid, const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    if (t.header != std::vector<std::string>{"ix", "iy", "vx", "vy"})
        throw ParseError(path.string() + ": expected header ix,iy,vx,vy");
    if (t.rows.size() != grid.size()) {
        throw DataError(path.string() + ": " + std::to_string(t.rows.size()) + " rows for a " +
                        std::to_string(grid.nx) + "x" + std::to_string(grid.ny) + " grid");
    }
    VectorField v(grid);
    std::vector<char> seen(grid.size(), 0);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path.string() + ": row " + std::to_string(r + 2);
        if (t.rows[r].size() != 4)
            throw ParseError(where + ": expected 4 fields");
        const double fx = parse_number(t.rows[r][0], where), fy = parse_number(t.rows[r][1], where);
        const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
        if (ix != fx || iy != fy || ix < 0 || iy < 0 || ix >= grid.nx || iy >= grid.ny)
            throw DataError(where + ": index out of range");
        const std::size_t i = grid.index(ix, iy);
        if (seen[i]++)
            throw DataError(where + ": duplicate pixel");
        v.x()[i] = parse_number(t.rows[r][2], where);
        v.y()[i] = parse_number(t.rows[r][3], where);
    }
    return v;
}

void write_scalar_csv(const ScalarField& s, const std::filesystem::path& path, std::string_view column) {
    const Grid& g = s.grid();
    std::vector<std::vector<std::string>> rows;
    rows.reserve(g.size());
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            rows.push_back({std::to_string(ix), std::to_string(iy), format_double(s.at(ix, iy))});
    write_csv(path, {"ix", "iy", std::string(column)}, rows);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> b = read_file(path);
    return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> checkpoint_encode(const DiffusionModel& model) {
    const DenoiserParams& p = model.params;
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;
    {
        Writer w;
        w.put<std::int32_t>(model.latent.grid().nx);
        w.put<std::int32_t>(model.latent.grid().ny);
        w.put<std::int32_t>(model.latent.bandlimit());
        w.put<std::int32_t>(model.time_steps);
        w.put<std::int32_t>(model.pool_side);
        sections.emplace_back("LATC", std::move(w.data()));
    }
    {
        Writer w;
        w.put<std::int32_t>(model.schedule.T);
        w.f64(model.schedule.beta_start);
        w.f64(model.schedule.beta_end);
        sections.emplace_back("SCHD", std::move(w.data()));
    }
    {
        Writer w;
        w.put<std::uint64_t>(model.normalizer.mean.size());
        for (double v : model.normalizer.mean)
            w.f64(v);
        for (double v : model.normalizer.scale)
            w.f64(v);
        sections.emplace_back("NORM", std::move(w.data()));
    }
    {
        Writer w;
        w.put<std::uint64_t>(p.shape.latent_dim);
        w.put<std::uint64_t>(p.shape.image_dim);
        w.put<std::uint64_t>(p.shape.text_dim);
        w.put<std::uint64_t>(p.shape.time_dim);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.hidden.size()));
        for (std::size_t h : p.shape.hidden)
            w.put<std::uint64_t>(h);
        w.put<std::uint32_t>(p.shape.prediction == Prediction::Data ? 1u : 0u);
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
                for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
                    w.f64(p.weights[l](i, j));
            for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
                w.f64(p.biases[l][i]);
        }
        sections.emplace_back("NETW", std::move(w.data()));
    }

    Writer out;
    out.bytes("IGGC");
    out.put<std::uint16_t>(kCheckpointVersion);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(sections.size()));
    std::uint64_t offset = 4 + 2 + 4 + sections.size() * (4 + 8 + 8);
    for (const auto& [tag, body] : sections) {
        out.bytes(tag);
        out.put<std::uint64_t>(offset);
        out.put<std::uint64_t>(body.size());
        offset += body.size();
    }
    for (const auto& [tag, body] : sections)
        out.data().insert(out.data().end(), body.begin(), body.end());
    return std::move(out.data());
}

DiffusionModel checkpoint_decode(std::span<const std::uint8_t> bytes, std::string_view name) {
    Reader head(bytes, name);
    if (head.tag(4, "magic") != "IGGC")
        parse_fail(name, 0, "not a checkpoint (magic \"IGGC\" missing)");
    const auto version = head.get<std::uint16_t>("version");
    if (version != kCheckpointVersion) {
        parse_fail(name, 4, "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = head.get<std::uint32_t>("section count");
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> table;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string tag = head.tag(4, "section tag");
        const auto off = head.get<std::uint64_t>("section offset");
        const auto size = head.get<std::uint64_t>("section size");
        if (off > bytes.size() || size > bytes.size() - off)
            head.fail("section " + tag + " extends past the end of the file");
        table[tag] = {off, size};
    }
    auto section = [&](const char* tag) {
        auto it = table.find(tag);
        if (it == table.end())
            parse_fail(name, head.pos(), std::string("missing section ") + tag);
        return Reader(bytes, name, it->second.first, it->second.first + it->second.second);
    };

    Reader lat = section("LATC");
    const int nx = lat.get<std::int32_t>("grid width");
    const int ny = lat.get<std::int32_t>("grid height");
    const int r = lat.get<std::int32_t>("bandlimit");
    const int steps = lat.get<std::int32_t>("time steps");
    const int pool = lat.get<std::int32_t>("pool side");

    Reader sch = section("SCHD");
    const int T = sch.get<std::int32_t>("diffusion steps");
    const double b0 = sch.f64("beta start");
    const double b1 = sch.f64("beta end");

    Reader norm = section("NORM");
    const auto dim = norm.get<std::uint64_t>("normalizer size");
    if (dim > bytes.size() / 8)
        norm.fail("normalizer size is implausible");
    LatentNormalizer normalizer{std::vector<double>(dim), std::vector<double>(dim)};
    for (auto& v : normalizer.mean)
        v = norm.f64("normalizer mean");
    for (auto& v : normalizer.scale)
        v = norm.f64("normalizer scale");

    Reader net = section("NETW");
    DenoiserShape shape;
    shape.latent_dim = net.get<std::uint64_t>("latent dim");
    shape.image_dim = net.get<std::uint64_t>("image dim");
    shape.text_dim = net.get<std::uint64_t>("text dim");
    shape.time_dim = net.get<std::uint64_t>("time dim");
    const auto layers = net.get<std::uint32_t>("hidden count");
    if (layers > 64)
        net.fail("hidden layer count is implausible");
    shape.hidden.resize(layers);
    for (auto& h : shape.hidden) {
        h = net.get<std::uint64_t>("hidden width");
        if (h > bytes.size())
            net.fail("hidden width is implausible");
    }
    const auto prediction = net.get<std::uint32_t>("prediction kind");
    if (prediction > 1)
        net.fail("unknown prediction kind " + std::to_string(prediction));
    shape.prediction = prediction == 1 ? Prediction::Data : Prediction::Noise;
    if (shape.latent_dim > bytes.size() || shape.image_dim > bytes.size() || shape.text_dim > bytes.size() ||
        shape.time_dim > bytes.size())
        net.fail("layer dimensions are implausible");

    try {
        DiffusionModel model{LatentConfig(Grid(nx, ny), r), steps, pool, NoiseSchedule::linear(T, b0, b1),
                             DenoiserParams::zeros(shape), std::move(normalizer)};
        DenoiserParams& p = model.params;
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
                for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
                    p.weights[l](i, j) = net.f64("weights");
            for (Eigen::Index i = 0; i < p.biases[l].size(); ++i)
                p.biases[l][i] = net.f64("biases");
        }
        if (model.normalizer.mean.size() != shape.latent_dim ||
            shape.latent_dim != model.latent.latent_dim() * static_cast<std::size_t>(steps + 1))
            throw DataError("latent layout, normalizer and network sizes disagree");
        return model;
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw DataError(std::string(name) + ": inconsistent checkpoint: " + e.what());
    }
}

void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& path) {
    write_file(path, checkpoint_encode(model));
}

DiffusionModel load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    return checkpoint_decode(bytes, path.string());
}

std::vector<std::uint8_t> latent_encode(const LatentGeodesic& g) {
    Writer w;
    w.bytes("IGGL");
    w.put<std::uint16_t>(1);
    w.put<std::int32_t>(g.config().grid().nx);
    w.put<std::int32_t>(g.config().grid().ny);
    w.put<std::int32_t>(g.config().bandlimit());
    w.put<std::int32_t>(g.steps);
    for (double v : g.flatten())
        w.f64(v);
    return std::move(w.data());
}

LatentGeodesic latent_decode(std::span<const std::uint8_t> bytes, std::string_view name) {
    Reader r(bytes, name);
    if (r.tag(4, "magic") != "IGGL")
        parse_fail(name, 0, "not a latent trajectory (magic \"IGGL\" missing)");
    if (r.get<std::uint16_t>("version") != 1)
        parse_fail(name, 4, "unsupported latent trajectory version");
    const int nx = r.get<std::int32_t>("grid width");
    const int ny = r.get<std::int32_t>("grid height");
    const int band = r.get<std::int32_t>("bandlimit");
    const int steps = r.get<std::int32_t>("steps");
    const LatentConfig cfg(Grid(nx, ny), band);
    if (steps < 1 || steps > 100000)
        r.fail("implausible step count");
    std::vector<double> flat(cfg.latent_dim() * static_cast<std::size_t>(steps + 1));
    for (auto& v : flat)
        v = r.f64("latent values");
    return LatentGeodesic::unflatten(cfg, steps, flat);
}

} // namespace igg
