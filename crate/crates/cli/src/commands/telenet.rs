use anyhow::Result;
use chaostrack::data::Location;
use chaostrack::telenet::{
    build_network, connection_map, degree_heatmap, modwt, scale_similarity, Region, RegionEdge, ScaleNetwork,
};

use crate::args::TelenetArgs;
use crate::output::{join_floats, Manifest, OutputSet};
use crate::usage;

use super::load_grid_input;

pub fn parse_region(spec: &str) -> Result<Region> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("region {spec:?} must be name:lat_min:lat_max:lon_min:lon_max"));
    let name_ok = !parts[0].is_empty()
        && parts[0].chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if parts.len() != 5 || !name_ok {
        return Err(bad());
    }
    let nums: Vec<f64> = parts[1..]
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    Ok(Region::new(parts[0], (nums[0], nums[1]), (nums[2], nums[3]))?)
}

pub fn similarity_csv(ids: &[&str], net: &ScaleNetwork) -> String {
    let mut out = format!("id,{}\n", ids.join(","));
    for (i, id) in ids.iter().enumerate() {
        out.push_str(&format!("{id},{}\n", join_floats(net.similarity.row(i))));
    }
    out
}

pub fn edges_csv(ids: &[&str], net: &ScaleNetwork) -> String {
    let mut out = String::from("src_id,dst_id,scale,similarity\n");
    for (i, j) in net.edges() {
        out.push_str(&format!("{},{},{},{}\n", ids[i], ids[j], net.scale, net.similarity.get(i, j)));
    }
    out
}

pub fn degrees_csv(net: &ScaleNetwork, locations: &[Location]) -> Result<String> {
    let mut out = String::from("lat,lon,degree,scale\n");
    for r in degree_heatmap(net, locations)? {
        out.push_str(&format!("{},{},{},{}\n", r.lat, r.lon, r.degree, r.scale));
    }
    Ok(out)
}

pub fn connections_csv(edges: &[RegionEdge]) -> String {
    let mut out = String::from("src_id,src_lat,src_lon,dst_id,dst_lat,dst_lon,similarity,dst_region\n");
    for e in edges {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.source.id, e.source.lat, e.source.lon, e.target.id, e.target.lat, e.target.lon, e.similarity, e.target_region
        ));
    }
    out
}

pub fn run(args: &TelenetArgs) -> Result<()> {
    let mut scales = args.scales.clone();
    scales.sort_unstable();
    scales.dedup();
    if let Some(&s) = scales.first().filter(|&&s| s < 3) {
        return Err(usage(format!("scale {s} is below the finest scale 3")));
    }
    let deepest = scales.last().copied().unwrap_or(3) - 2;
    let levels = args.levels.unwrap_or(deepest);
    if levels < deepest {
        return Err(usage(format!("--levels {levels} cannot resolve scale {}", deepest + 2)));
    }
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(usage(format!("--threshold must lie in (0, 1], got {}", args.threshold)));
    }
    let regions: Vec<Region> = args.regions.iter().map(|r| parse_region(r)).collect::<Result<_>>()?;

    let mut manifest = Manifest::new("telenet", args)?;
    let series = load_grid_input(&mut manifest, &args.data)?;
    let ids = series.location_ids();
    let decomp = modwt(&series, levels)?;

    let mut out = OutputSet::new();
    let mut flagged = serde_json::Map::new();
    for &scale in &scales {
        let sim = scale_similarity(&decomp, scale)?;
        if !sim.zero_variance.is_empty() {
            let names: Vec<&str> = sim.zero_variance.iter().map(|&i| ids[i]).collect();
            flagged.insert(format!("scale_{scale}"), serde_json::json!(names));
        }
        let net = build_network(&sim.matrix, scale, args.threshold)?;
        let dir = &args.out_dir;
        out.add(dir.join(format!("similarity_s{scale}.csv")), similarity_csv(&ids, &net));
        out.add(dir.join(format!("edges_s{scale}.csv")), edges_csv(&ids, &net));
        out.add(dir.join(format!("degrees_s{scale}.csv")), degrees_csv(&net, series.locations())?);
        for region in &regions {
            let edges = connection_map(&net, series.locations(), region, &regions)?;
            out.add(
                dir.join(format!("connections_{}_s{scale}.csv", region.name)),
                connections_csv(&edges),
            );
        }
    }
    if !flagged.is_empty() {
        manifest.notes = serde_json::json!({ "zero_variance_locations": flagged });
    }
    out.commit(manifest, &args.out_dir.join("telenet.manifest.json"))
}
