//! Static top-down SVG plot of a conversation layout.

use std::fmt::Write;

use crate::layout::ConversationLayout;
use crate::scalar::Scalar;

const PX_PER_M: f64 = 150.0;
const MARGIN_PX: f64 = 40.0;
const TICK_M: f64 = 0.25;

pub fn layout_svg<T: Scalar>(layout: &ConversationLayout<T>) -> String {
    let r = layout.placement.radius_m.to_f64_lossy();
    let half_w = r.max(0.5) + 0.2;
    let top = 2.0 * r + 0.3;
    let bottom = -0.3;
    let width = 2.0 * half_w * PX_PER_M + 2.0 * MARGIN_PX;
    let height = (top - bottom) * PX_PER_M + 2.0 * MARGIN_PX;

    // world (x, z) -> canvas, with +z pointing up the page
    let px = |x: f64| MARGIN_PX + (x + half_w) * PX_PER_M;
    let py = |z: f64| MARGIN_PX + (top - z) * PX_PER_M;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="#999999" stroke-dasharray="6 4"/>"##,
        px(0.0),
        py(r),
        r * PX_PER_M
    );
    let _ = writeln!(
        s,
        r##"<circle class="local" cx="{:.3}" cy="{:.3}" r="8" fill="#1f77b4"/>"##,
        px(0.0),
        py(0.0)
    );
    for (i, p) in layout.poses.iter().enumerate() {
        let (x, z) = (p.x_m.to_f64_lossy(), p.z_m.to_f64_lossy());
        let (fx, fz) = p.facing();
        let (fx, fz) = (fx.to_f64_lossy(), fz.to_f64_lossy());
        let _ = writeln!(
            s,
            r##"<circle class="avatar" data-index="{i}" cx="{:.3}" cy="{:.3}" r="8" fill="#d62728"/>"##,
            px(x),
            py(z)
        );
        let _ = writeln!(
            s,
            r##"<line class="yaw" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#d62728" stroke-width="2"/>"##,
            px(x),
            py(z),
            px(x + fx * TICK_M),
            py(z + fz * TICK_M)
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{MARGIN_PX:.0}" y="{:.0}" font-family="monospace" font-size="12">radian {:.2} deg, radius {:.3} m, {} remote</text>"##,
        MARGIN_PX / 2.0,
        layout.placement.radian_deg.to_f64_lossy(),
        r,
        layout.n_remote
    );
    s.push_str("</svg>\n");
    s
}
