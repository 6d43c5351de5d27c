#include "lidarsim/point_cloud_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lidarsim/errors.hpp"

namespace lidarsim {

namespace {

struct LineReader {
    std::istream& in;
    std::size_t offset = 0;  // byte offset of the next unread byte

    bool next(std::string& line) {
        line.clear();
        if (!std::getline(in, line)) return false;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }
};

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

struct ScalarType {
    enum Kind { I8, U8, I16, U16, I32, U32, F32, F64 } kind = F32;
    std::size_t size = 4;
};

ScalarType scalar_type(const std::string& name, std::size_t offset) {
    if (name == "char" || name == "int8") return {ScalarType::I8, 1};
    if (name == "uchar" || name == "uint8") return {ScalarType::U8, 1};
    if (name == "short" || name == "int16") return {ScalarType::I16, 2};
    if (name == "ushort" || name == "uint16") return {ScalarType::U16, 2};
    if (name == "int" || name == "int32") return {ScalarType::I32, 4};
    if (name == "uint" || name == "uint32") return {ScalarType::U32, 4};
    if (name == "float" || name == "float32") return {ScalarType::F32, 4};
    if (name == "double" || name == "float64") return {ScalarType::F64, 8};
    throw ParseError("unsupported property type '" + name + "'", offset);
}

double decode_scalar(const unsigned char* bytes, ScalarType t) {
    switch (t.kind) {
        case ScalarType::I8: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(bytes));
        case ScalarType::U8: return static_cast<double>(*bytes);
        case ScalarType::I16: {
            std::int16_t v;
            std::memcpy(&v, bytes, 2);
            return v;
        }
        case ScalarType::U16: {
            std::uint16_t v;
            std::memcpy(&v, bytes, 2);
            return v;
        }
        case ScalarType::I32: {
            std::int32_t v;
            std::memcpy(&v, bytes, 4);
            return v;
        }
        case ScalarType::U32: {
            std::uint32_t v;
            std::memcpy(&v, bytes, 4);
            return v;
        }
        case ScalarType::F32: {
            float v;
            std::memcpy(&v, bytes, 4);
            return v;
        }
        case ScalarType::F64: {
            double v;
            std::memcpy(&v, bytes, 8);
            return v;
        }
    }
    return 0.0;
}

// ASCII payloads must agree with their binary twins, so values declared as
// 32-bit floats are quantized through float on the way in.
double parse_scalar(const std::string& token, ScalarType t) {
    const double v = std::stod(token);
    return t.kind == ScalarType::F32 ? static_cast<double>(static_cast<float>(v)) : v;
}

struct PropertyLayout {
    std::string name;
    ScalarType type;
};

struct ColumnMap {
    int x = -1, y = -1, z = -1, label = -1, material = -1;

    void assign(const std::string& name, int index) {
        if (name == "x") x = index;
        else if (name == "y") y = index;
        else if (name == "z") z = index;
        else if (name == "label") label = index;
        else if (name == "material") material = index;
    }

    void require_xyz(std::size_t offset) const {
        if (x < 0 || y < 0 || z < 0)
            throw ParseError("missing x/y/z properties", offset);
    }
};

void parse_class_comment(const std::vector<std::string>& tokens, ClassTable& table) {
    // "comment class <id> <name>"
    if (tokens.size() != 4 || tokens[1] != "class") return;
    try {
        const auto id = static_cast<std::uint32_t>(std::stoul(tokens[2]));
        while (table.names.size() <= id) table.names.push_back("unknown");
        table.names[id] = tokens[3];
    } catch (const std::exception&) {
        // malformed class comment: ignore, comments are advisory
    }
}

// -------------------------------------------------------------- PLY reading

SemanticPointCloud read_ply(std::istream& in) {
    LineReader reader{in};
    std::string line;
    if (!reader.next(line) || line != "ply") throw ParseError("not a PLY file", 0);

    bool binary = false;
    bool saw_format = false;
    std::size_t vertex_count = 0;
    bool in_vertex_element = false;
    bool vertex_seen = false;
    std::vector<PropertyLayout> props;
    ClassTable classes = ClassTable::standard();
    bool custom_classes = false;

    while (true) {
        const std::size_t line_start = reader.offset;
        if (!reader.next(line)) throw ParseError("header missing end_header", reader.offset);
        const auto tokens = split_tokens(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "end_header") break;
        if (tokens[0] == "format") {
            if (tokens.size() < 2) throw ParseError("malformed format line", line_start);
            if (tokens[1] == "ascii") binary = false;
            else if (tokens[1] == "binary_little_endian") binary = true;
            else throw ParseError("unsupported encoding '" + tokens[1] + "'", line_start);
            saw_format = true;
        } else if (tokens[0] == "comment") {
            if (tokens.size() >= 2 && tokens[1] == "class") {
                if (!custom_classes) {
                    classes.names.clear();
                    custom_classes = true;
                }
                parse_class_comment(tokens, classes);
            }
        } else if (tokens[0] == "element") {
            if (tokens.size() != 3) throw ParseError("malformed element line", line_start);
            if (tokens[1] == "vertex") {
                if (vertex_seen) throw ParseError("duplicate vertex element", line_start);
                in_vertex_element = true;
                vertex_seen = true;
                vertex_count = std::stoull(tokens[2]);
            } else {
                if (!vertex_seen)
                    throw ParseError("element '" + tokens[1] + "' precedes vertex element",
                                     line_start);
                in_vertex_element = false;  // trailing elements are ignored
            }
        } else if (tokens[0] == "property") {
            if (!in_vertex_element) continue;
            if (tokens.size() >= 2 && tokens[1] == "list")
                throw ParseError("unsupported encoding: list property on vertex element",
                                 line_start);
            if (tokens.size() != 3) throw ParseError("malformed property line", line_start);
            props.push_back({tokens[2], scalar_type(tokens[1], line_start)});
        } else if (tokens[0] == "obj_info") {
            continue;
        } else {
            throw ParseError("unrecognized header line '" + tokens[0] + "'", line_start);
        }
    }
    if (!saw_format) throw ParseError("header missing format line", reader.offset);
    if (!vertex_seen) throw ParseError("header missing vertex element", reader.offset);

    ColumnMap cols;
    for (std::size_t i = 0; i < props.size(); ++i)
        cols.assign(props[i].name, static_cast<int>(i));
    cols.require_xyz(reader.offset);
    if (custom_classes && classes.names.empty()) classes = ClassTable::standard();

    SemanticPointCloud cloud;
    cloud.classes = classes;
    cloud.labels_from_file = cols.label >= 0;
    cloud.points.reserve(vertex_count);
    cloud.labels.reserve(vertex_count);
    if (cols.material >= 0) cloud.materials.reserve(vertex_count);

    std::vector<double> row(props.size());
    if (binary) {
        std::size_t record_size = 0;
        for (const auto& p : props) record_size += p.type.size;
        std::vector<char> buf(record_size);
        for (std::size_t v = 0; v < vertex_count; ++v) {
            in.read(buf.data(), static_cast<std::streamsize>(record_size));
            if (static_cast<std::size_t>(in.gcount()) != record_size)
                throw ParseError("truncated payload: expected " + std::to_string(vertex_count) +
                                     " points, got " + std::to_string(v),
                                 reader.offset + v * record_size);
            std::size_t at = 0;
            for (std::size_t c = 0; c < props.size(); ++c) {
                row[c] = decode_scalar(reinterpret_cast<unsigned char*>(buf.data()) + at,
                                       props[c].type);
                at += props[c].type.size;
            }
            cloud.points.push_back({row[static_cast<std::size_t>(cols.x)],
                                    row[static_cast<std::size_t>(cols.y)],
                                    row[static_cast<std::size_t>(cols.z)]});
            cloud.labels.push_back(cols.label >= 0 ? static_cast<std::uint32_t>(
                                                         row[static_cast<std::size_t>(cols.label)])
                                                   : ClassTable::kUnknown);
            if (cols.material >= 0)
                cloud.materials.push_back(
                    static_cast<std::uint32_t>(row[static_cast<std::size_t>(cols.material)]));
        }
    } else {
        for (std::size_t v = 0; v < vertex_count; ++v) {
            const std::size_t line_start = reader.offset;
            if (!reader.next(line))
                throw ParseError("truncated payload: expected " + std::to_string(vertex_count) +
                                     " points, got " + std::to_string(v),
                                 line_start);
            const auto tokens = split_tokens(line);
            if (tokens.size() < props.size())
                throw ParseError("short vertex record", line_start);
            for (std::size_t c = 0; c < props.size(); ++c)
                row[c] = parse_scalar(tokens[c], props[c].type);
            cloud.points.push_back({row[static_cast<std::size_t>(cols.x)],
                                    row[static_cast<std::size_t>(cols.y)],
                                    row[static_cast<std::size_t>(cols.z)]});
            cloud.labels.push_back(cols.label >= 0 ? static_cast<std::uint32_t>(
                                                         row[static_cast<std::size_t>(cols.label)])
                                                   : ClassTable::kUnknown);
            if (cols.material >= 0)
                cloud.materials.push_back(
                    static_cast<std::uint32_t>(row[static_cast<std::size_t>(cols.material)]));
        }
    }
    // labels must index the registered table
    for (std::uint32_t& l : cloud.labels)
        if (l >= cloud.classes.size()) l = ClassTable::kUnknown;
    return cloud;
}

// -------------------------------------------------------------- PCD reading

SemanticPointCloud read_pcd(std::istream& in) {
    LineReader reader{in};
    std::string line;
    std::vector<std::string> fields;
    std::vector<std::size_t> sizes;
    std::vector<char> types;
    std::vector<int> counts;
    std::size_t points = 0;
    bool have_points = false;
    std::string data;
    ClassTable classes = ClassTable::standard();
    bool custom_classes = false;
    std::size_t data_offset = 0;

    while (true) {
        const std::size_t line_start = reader.offset;
        if (!reader.next(line)) throw ParseError("header missing DATA line", reader.offset);
        auto tokens = split_tokens(line);
        if (tokens.empty()) continue;
        if (tokens[0] == "#") {
            if (tokens.size() >= 2 && tokens[1] == "class") {
                if (!custom_classes) {
                    classes.names.clear();
                    custom_classes = true;
                }
                std::vector<std::string> shifted(tokens.begin() + 1, tokens.end());
                shifted.insert(shifted.begin(), "comment");
                parse_class_comment(shifted, classes);
            }
            continue;
        }
        if (tokens[0].rfind("#", 0) == 0) continue;
        const std::string& key = tokens[0];
        if (key == "VERSION" || key == "VIEWPOINT" || key == "WIDTH" || key == "HEIGHT") {
            continue;
        } else if (key == "FIELDS") {
            fields.assign(tokens.begin() + 1, tokens.end());
        } else if (key == "SIZE") {
            for (std::size_t i = 1; i < tokens.size(); ++i) sizes.push_back(std::stoull(tokens[i]));
        } else if (key == "TYPE") {
            for (std::size_t i = 1; i < tokens.size(); ++i) types.push_back(tokens[i][0]);
        } else if (key == "COUNT") {
            for (std::size_t i = 1; i < tokens.size(); ++i) counts.push_back(std::stoi(tokens[i]));
        } else if (key == "POINTS") {
            if (tokens.size() != 2) throw ParseError("malformed POINTS line", line_start);
            points = std::stoull(tokens[1]);
            have_points = true;
        } else if (key == "DATA") {
            if (tokens.size() != 2) throw ParseError("malformed DATA line", line_start);
            data = tokens[1];
            data_offset = reader.offset;
            break;
        } else {
            throw ParseError("unrecognized header line '" + key + "'", line_start);
        }
    }
    if (fields.empty()) throw ParseError("header missing FIELDS", data_offset);
    if (!have_points) throw ParseError("header missing POINTS", data_offset);
    if (sizes.size() != fields.size() || types.size() != fields.size())
        throw ParseError("FIELDS/SIZE/TYPE length mismatch", data_offset);
    if (counts.empty()) counts.assign(fields.size(), 1);
    for (int c : counts)
        if (c != 1) throw ParseError("unsupported encoding: COUNT != 1", data_offset);
    if (data == "binary_compressed")
        throw ParseError("unsupported encoding 'binary_compressed'", data_offset);
    if (data != "ascii" && data != "binary")
        throw ParseError("unsupported encoding '" + data + "'", data_offset);

    ColumnMap cols;
    std::vector<ScalarType> field_types(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
        cols.assign(fields[i], static_cast<int>(i));
        ScalarType t;
        switch (types[i]) {
            case 'F': t.kind = sizes[i] == 8 ? ScalarType::F64 : ScalarType::F32; break;
            case 'U':
                t.kind = sizes[i] == 1   ? ScalarType::U8
                         : sizes[i] == 2 ? ScalarType::U16
                                         : ScalarType::U32;
                break;
            case 'I':
                t.kind = sizes[i] == 1   ? ScalarType::I8
                         : sizes[i] == 2 ? ScalarType::I16
                                         : ScalarType::I32;
                break;
            default:
                throw ParseError(std::string("unsupported TYPE '") + types[i] + "'", data_offset);
        }
        t.size = sizes[i];
        field_types[i] = t;
    }
    cols.require_xyz(data_offset);

    SemanticPointCloud cloud;
    cloud.classes = custom_classes && !classes.names.empty() ? classes : ClassTable::standard();
    cloud.labels_from_file = cols.label >= 0;

    std::vector<double> row(fields.size());
    if (data == "binary") {
        std::size_t record_size = 0;
        for (std::size_t s : sizes) record_size += s;
        std::vector<char> buf(record_size);
        for (std::size_t v = 0; v < points; ++v) {
            in.read(buf.data(), static_cast<std::streamsize>(record_size));
            if (static_cast<std::size_t>(in.gcount()) != record_size)
                throw ParseError("truncated payload: expected " + std::to_string(points) +
                                     " points, got " + std::to_string(v),
                                 data_offset + v * record_size);
            std::size_t at = 0;
            for (std::size_t c = 0; c < fields.size(); ++c) {
                row[c] = decode_scalar(reinterpret_cast<unsigned char*>(buf.data()) + at,
                                       field_types[c]);
                at += sizes[c];
            }
            cloud.points.push_back({row[static_cast<std::size_t>(cols.x)],
                                    row[static_cast<std::size_t>(cols.y)],
                                    row[static_cast<std::size_t>(cols.z)]});
            cloud.labels.push_back(cols.label >= 0 ? static_cast<std::uint32_t>(
                                                         row[static_cast<std::size_t>(cols.label)])
                                                   : ClassTable::kUnknown);
            if (cols.material >= 0)
                cloud.materials.push_back(
                    static_cast<std::uint32_t>(row[static_cast<std::size_t>(cols.material)]));
        }
    } else {
        for (std::size_t v = 0; v < points; ++v) {
            const std::size_t line_start = reader.offset;
            if (!reader.next(line))
                throw ParseError("truncated payload: expected " + std::to_string(points) +
                                     " points, got " + std::to_string(v),
                                 line_start);
            const auto tokens = split_tokens(line);
            if (tokens.size() < fields.size()) throw ParseError("short point record", line_start);
            for (std::size_t c = 0; c < fields.size(); ++c)
                row[c] = parse_scalar(tokens[c], field_types[c]);
            cloud.points.push_back({row[static_cast<std::size_t>(cols.x)],
                                    row[static_cast<std::size_t>(cols.y)],
                                    row[static_cast<std::size_t>(cols.z)]});
            cloud.labels.push_back(cols.label >= 0 ? static_cast<std::uint32_t>(
                                                         row[static_cast<std::size_t>(cols.label)])
                                                   : ClassTable::kUnknown);
            if (cols.material >= 0)
                cloud.materials.push_back(
                    static_cast<std::uint32_t>(row[static_cast<std::size_t>(cols.material)]));
        }
    }
    for (std::uint32_t& l : cloud.labels)
        if (l >= cloud.classes.size()) l = ClassTable::kUnknown;
    return cloud;
}

// -------------------------------------------------------------- writing

void append_f32(std::string& out, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void append_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

std::string format_float(float v) {
    // shortest representation that round-trips a 32-bit float
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

void write_ply(const SemanticPointCloud& cloud, std::ostream& out, CloudEncoding encoding) {
    const bool binary = encoding == CloudEncoding::Binary;
    const bool with_material = !cloud.materials.empty();
    out << "ply\n";
    out << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "comment frame right-handed z-up meters\n";
    for (std::size_t i = 0; i < cloud.classes.names.size(); ++i)
        out << "comment class " << i << " " << cloud.classes.names[i] << "\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uint label\n";
    if (with_material) out << "property uint material\n";
    out << "end_header\n";

    if (binary) {
        std::string buf;
        buf.reserve(cloud.size() * (with_material ? 20 : 16));
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            append_f32(buf, static_cast<float>(cloud.points[i].x));
            append_f32(buf, static_cast<float>(cloud.points[i].y));
            append_f32(buf, static_cast<float>(cloud.points[i].z));
            append_u32(buf, cloud.labels[i]);
            if (with_material) append_u32(buf, cloud.materials[i]);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    } else {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            out << format_float(static_cast<float>(cloud.points[i].x)) << " "
                << format_float(static_cast<float>(cloud.points[i].y)) << " "
                << format_float(static_cast<float>(cloud.points[i].z)) << " "
                << cloud.labels[i];
            if (with_material) out << " " << cloud.materials[i];
            out << "\n";
        }
    }
}

void write_pcd(const SemanticPointCloud& cloud, std::ostream& out, CloudEncoding encoding) {
    const bool binary = encoding == CloudEncoding::Binary;
    const bool with_material = !cloud.materials.empty();
    out << "# .PCD v0.7 - Point Cloud Data file format\n";
    for (std::size_t i = 0; i < cloud.classes.names.size(); ++i)
        out << "# class " << i << " " << cloud.classes.names[i] << "\n";
    out << "VERSION 0.7\n";
    out << "FIELDS x y z label" << (with_material ? " material" : "") << "\n";
    out << "SIZE 4 4 4 4" << (with_material ? " 4" : "") << "\n";
    out << "TYPE F F F U" << (with_material ? " U" : "") << "\n";
    out << "COUNT 1 1 1 1" << (with_material ? " 1" : "") << "\n";
    out << "WIDTH " << cloud.size() << "\n";
    out << "HEIGHT 1\n";
    out << "VIEWPOINT 0 0 0 1 0 0 0\n";
    out << "POINTS " << cloud.size() << "\n";
    out << "DATA " << (binary ? "binary" : "ascii") << "\n";

    if (binary) {
        std::string buf;
        buf.reserve(cloud.size() * (with_material ? 20 : 16));
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            append_f32(buf, static_cast<float>(cloud.points[i].x));
            append_f32(buf, static_cast<float>(cloud.points[i].y));
            append_f32(buf, static_cast<float>(cloud.points[i].z));
            append_u32(buf, cloud.labels[i]);
            if (with_material) append_u32(buf, cloud.materials[i]);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    } else {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            out << format_float(static_cast<float>(cloud.points[i].x)) << " "
                << format_float(static_cast<float>(cloud.points[i].y)) << " "
                << format_float(static_cast<float>(cloud.points[i].z)) << " "
                << cloud.labels[i];
            if (with_material) out << " " << cloud.materials[i];
            out << "\n";
        }
    }
}

}  // namespace

CloudFormat format_from_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".ply") return CloudFormat::Ply;
    if (ext == ".pcd") return CloudFormat::Pcd;
    throw ValidationError("cannot infer point-cloud format from '" + path.string() + "'");
}

SemanticPointCloud read_point_cloud(const std::filesystem::path& path, CloudFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return format == CloudFormat::Ply ? read_ply(in) : read_pcd(in);
}

SemanticPointCloud read_point_cloud(const std::filesystem::path& path) {
    return read_point_cloud(path, format_from_extension(path));
}

void write_point_cloud(const SemanticPointCloud& cloud, const std::filesystem::path& path,
                       CloudFormat format, CloudEncoding encoding) {
    if (cloud.empty()) throw EmptyCloudError();
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    if (format == CloudFormat::Ply)
        write_ply(cloud, out, encoding);
    else
        write_pcd(cloud, out, encoding);
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lidarsim
