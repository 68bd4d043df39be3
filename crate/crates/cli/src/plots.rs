//! Static SVG plots for completed runs: scenario maps, SRO traces against
//! the injected truth, and diary paint strips.

use std::path::Path;

use anyhow::{Context, Result};
use plotters::prelude::*;
use wasn_core::diarize::parse_rttm;
use wasn_core::simulate::Scenario;
use wasn_core::spatial::NetworkGeometry;
use wasn_core::sync::ClockEstimate;

/// Render plots for every meeting of a run directory.
pub fn render_run_plots(run_dir: &Path, plot_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(plot_dir)?;
    let meetings_dir = run_dir.join("meetings");
    let mut meetings: Vec<_> = std::fs::read_dir(&meetings_dir)
        .with_context(|| format!("no meetings directory in {}", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    meetings.sort();
    for meeting in meetings {
        let name = meeting
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Err(e) = render_meeting_plots(&meeting, plot_dir, &name) {
            eprintln!("plots for {name}: {e}");
        }
    }
    Ok(())
}

fn render_meeting_plots(meeting_dir: &Path, plot_dir: &Path, name: &str) -> Result<()> {
    let scenario: Scenario =
        serde_json::from_str(&std::fs::read_to_string(meeting_dir.join("scenario.json"))?)?;
    let geometry: Option<NetworkGeometry> = std::fs::read_to_string(meeting_dir.join("geometry.json"))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    scenario_map(&scenario, geometry.as_ref(), &plot_dir.join(format!("{name}_map.svg")))?;

    if let Ok(text) = std::fs::read_to_string(meeting_dir.join("clocks.json")) {
        let clocks: Vec<ClockEstimate> = serde_json::from_str(&text)?;
        sro_traces(&scenario, &clocks, &plot_dir.join(format!("{name}_sro.svg")))?;
    }

    let reference = parse_rttm(&std::fs::read_to_string(meeting_dir.join("reference.rttm"))?)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let hypothesis = parse_rttm(&std::fs::read_to_string(meeting_dir.join("hypothesis.rttm"))?)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    diary_strip(
        &reference,
        &hypothesis,
        scenario.duration_s,
        &plot_dir.join(format!("{name}_diary.svg")),
    )?;
    Ok(())
}

/// Room layout: true speaker and array positions, plus the calibrated
/// estimates mapped into the room frame through the reference array pose.
fn scenario_map(
    scenario: &Scenario,
    geometry: Option<&NetworkGeometry>,
    path: &Path,
) -> Result<()> {
    let root = SVGBackend::new(path, (760, 640)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(18)
        .x_label_area_size(28)
        .y_label_area_size(36)
        .build_cartesian_2d(-0.3..scenario.room[0] + 0.3, -0.3..scenario.room[1] + 0.3)?;
    chart.configure_mesh().disable_mesh().draw()?;

    chart.draw_series(std::iter::once(Rectangle::new(
        [(0.0, 0.0), (scenario.room[0], scenario.room[1])],
        BLACK.stroke_width(2),
    )))?;

    chart
        .draw_series(scenario.speakers.iter().map(|p| {
            Circle::new((p[0], p[1]), 6, BLUE.filled())
        }))?
        .label("speakers")
        .legend(|(x, y)| Circle::new((x + 8, y), 5, BLUE.filled()));
    chart
        .draw_series(scenario.arrays.iter().map(|a| {
            TriangleMarker::new((a.position[0], a.position[1]), 8, RED.filled())
        }))?
        .label("arrays")
        .legend(|(x, y)| TriangleMarker::new((x + 8, y), 7, RED.filled()));

    if let Some(geo) = geometry {
        // Estimates live in the reference-array gauge; place them in the
        // room through the true pose of array 0.
        let p0 = scenario.arrays[0].position;
        let o0 = scenario.arrays[0].orientation;
        let (s, c) = o0.sin_cos();
        let to_room = |p: [f64; 2]| -> (f64, f64) {
            (p0[0] + c * p[0] - s * p[1], p0[1] + s * p[0] + c * p[1])
        };
        chart
            .draw_series(
                geo.speakers
                    .iter()
                    .map(|&p| Cross::new(to_room(p), 7, BLUE.stroke_width(2))),
            )?
            .label("speaker estimates")
            .legend(|(x, y)| Cross::new((x + 8, y), 6, BLUE.stroke_width(2)));
        chart
            .draw_series(
                geo.arrays
                    .iter()
                    .map(|a| Cross::new(to_room(a.position), 7, RED.stroke_width(2))),
            )?
            .label("array estimates")
            .legend(|(x, y)| Cross::new((x + 8, y), 6, RED.stroke_width(2)));
    }

    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()?;
    root.present()?;
    Ok(())
}

fn sro_traces(scenario: &Scenario, clocks: &[ClockEstimate], path: &Path) -> Result<()> {
    let fs = scenario.sample_rate as f64;
    let root = SVGBackend::new(path, (860, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for trace in scenario.sro_ppm.iter().chain(clocks.iter().map(|c| &c.sro_ppm)) {
        for &v in trace {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let pad = ((hi - lo) * 0.1).max(1.0);
    let mut chart = ChartBuilder::on(&root)
        .margin(18)
        .x_label_area_size(32)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..scenario.duration_s, (lo - pad)..(hi + pad))?;
    chart
        .configure_mesh()
        .x_desc("time / s")
        .y_desc("SRO / ppm")
        .draw()?;

    let palette = [RED, BLUE, GREEN, MAGENTA];
    for (j, truth) in scenario.sro_ppm.iter().enumerate().skip(1) {
        let color = palette[(j - 1) % palette.len()];
        chart
            .draw_series(LineSeries::new(
                truth.iter().enumerate().map(|(l, &v)| {
                    (l as f64 * wasn_core::simulate::SRO_TRACE_SHIFT as f64 / fs, v)
                }),
                color.mix(0.4).stroke_width(3),
            ))?
            .label(format!("array {j} truth"))
            .legend(move |(x, y)| {
                PathElement::new([(x, y), (x + 16, y)], color.mix(0.4).stroke_width(3))
            });
        if let Some(clock) = clocks.get(j) {
            let shift = clock.sro_frame_shift as f64;
            chart
                .draw_series(LineSeries::new(
                    clock
                        .sro_ppm
                        .iter()
                        .enumerate()
                        .map(|(l, &v)| (l as f64 * shift / fs, v)),
                    color.stroke_width(1),
                ))?
                .label(format!("array {j} estimate"))
                .legend(move |(x, y)| {
                    PathElement::new([(x, y), (x + 16, y)], color.stroke_width(1))
                });
        }
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()?;
    root.present()?;
    Ok(())
}

fn diary_strip(
    reference: &[wasn_core::diarize::SpeakerSegment],
    hypothesis: &[wasn_core::diarize::SpeakerSegment],
    duration_s: f64,
    path: &Path,
) -> Result<()> {
    let mut speakers: Vec<String> = Vec::new();
    for s in reference.iter().chain(hypothesis) {
        if !speakers.contains(&s.speaker) {
            speakers.push(s.speaker.clone());
        }
    }
    speakers.sort();
    let rows = speakers.len();
    let root = SVGBackend::new(path, (860, (60 + rows * 26) as u32)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(14)
        .x_label_area_size(28)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..duration_s, 0.0..rows as f64)?;
    chart
        .configure_mesh()
        .disable_y_mesh()
        .y_labels(rows)
        .y_label_formatter(&|v| {
            speakers
                .get(v.floor() as usize)
                .cloned()
                .unwrap_or_default()
        })
        .x_desc("time / s")
        .draw()?;

    for (row, speaker) in speakers.iter().enumerate() {
        let y = row as f64;
        for (segments, color, height) in [
            (reference, BLUE.mix(0.5), 0.72),
            (hypothesis, RED.mix(0.8), 0.35),
        ] {
            chart.draw_series(
                segments
                    .iter()
                    .filter(|s| &s.speaker == speaker)
                    .map(|s| {
                        Rectangle::new(
                            [(s.onset_s, y + 0.1), (s.onset_s + s.duration_s, y + 0.1 + height)],
                            color.filled(),
                        )
                    }),
            )?;
        }
    }
    root.present()?;
    Ok(())
}
