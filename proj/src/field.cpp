#include "silpack/field.hpp"

namespace silpack {

WarpedSample warped_sample(const WarpedField& field, const Vec3& p_world) {
    const PoseFrame& frame = field.frame();
    const Vec3 local = frame.to_local(p_world);
    const FieldSample<double> s = sample_trilinear<double>(field.grid(), local);
    WarpedSample out;
    out.value = s.value;
    out.pose_gradient = frame.local_field_gradient(s.gradient, s.gradient.cross(local));
    return out;
}

}  // namespace silpack
