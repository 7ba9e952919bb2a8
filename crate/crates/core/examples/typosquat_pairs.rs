//! Near-identical publisher and image names, with the cumulative distance
//! distribution.

use slsa_audit::model::{ComponentRef, Repository};
use slsa_audit::typosquat::{dl_distance, distance_cdf, find_near_pairs, records_from_components, NormalizeConfig};

fn main() {
    let names = [
        ("dockerhub", "amazon", "aws-lambda-python"),
        ("dockerhub", "amazom", "aws-lambda-pyhton"),
        ("dockerhub", "lambci", "lambda"),
        ("dockerhub", "lambdci", "lambda"),
        ("quay", "serverless", "sls-node"),
        ("github", "serverles", "sls-node"),
        ("github", "acme", "thumbnailer"),
        ("aws-sar", "amazon", "aws-lambda-python"),
    ];
    let components: Vec<ComponentRef> = names
        .iter()
        .map(|(r, p, n)| ComponentRef::new(r.parse::<Repository>().unwrap(), *p, *n, None).unwrap())
        .collect();
    let records = records_from_components(&components, &NormalizeConfig::default());
    let search = find_near_pairs(&records, 2).unwrap();
    for p in search.collisions.iter().chain(&search.pairs) {
        println!("{:<9} d={} {:<20} {:<20} ({} / {})", p.a.kind.to_string(), p.distance, p.a.name, p.b.name, p.a.owner, p.b.owner);
    }
    println!("\n{} same-kind pairs examined", search.total_pairs);
    println!("distance  cumulative fraction");
    for pt in distance_cdf(&records, 3).unwrap() {
        println!("{:>8}  {:.3}", pt.distance, pt.fraction);
    }
    println!("\nosa(ca, abc) = {}, osa(python, pyhton) = {}", dl_distance("ca", "abc"), dl_distance("python", "pyhton"));
}
