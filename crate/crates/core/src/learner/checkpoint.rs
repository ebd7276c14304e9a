//! Binary learner checkpoints: magic, version, config hash, algorithm and
//! hyperparameters, temperature, the five networks and four optimizers.
//! Every float is stored as little-endian `f64`, so round trips are bit-exact.

use std::io::{self, Read, Write};

use crate::nn::io::{
    invalid, read_adam, read_f64, read_mlp, read_str, read_u32, read_u8, write_adam, write_f64, write_mlp, write_str, write_u32,
};
use crate::nn::PolicyNet;

use super::{AblationFlags, Algorithm, HyperParams, Learner};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"QCSACCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, learner: &Learner, config_hash: &str) -> io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(w, CHECKPOINT_VERSION)?;
    write_str(w, config_hash)?;
    write_str(w, learner.algorithm.as_str())?;
    w.write_all(&[learner.flags.use_qnfd as u8, learner.flags.use_sddu as u8])?;
    let hp = toml::to_string(&learner.hp).map_err(|e| invalid(&e.to_string()))?;
    write_str(w, &hp)?;
    write_f64(w, learner.log_alpha)?;
    write_u32(w, learner.policy.action_dim as u32)?;
    write_mlp(w, &learner.policy.net)?;
    for net in learner.q.iter().chain(&learner.q_target) {
        write_mlp(w, net)?;
    }
    write_adam(w, &learner.opt_policy)?;
    for opt in &learner.opt_q {
        write_adam(w, opt)?;
    }
    write_adam(w, &learner.opt_alpha)
}

/// Returns the learner and the config hash recorded with it.
pub fn read_checkpoint<R: Read>(r: &mut R) -> io::Result<(Learner, String)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(invalid("not a learner checkpoint"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(invalid(&format!("unsupported checkpoint version {version}")));
    }
    let config_hash = read_str(r)?;
    let algorithm: Algorithm = read_str(r)?.parse().map_err(|e: String| invalid(&e))?;
    let flags = AblationFlags {
        use_qnfd: read_u8(r)? != 0,
        use_sddu: read_u8(r)? != 0,
    };
    let hp: HyperParams = toml::from_str(&read_str(r)?).map_err(|e| invalid(&e.to_string()))?;
    let log_alpha = read_f64(r)?;
    let action_dim = read_u32(r)? as usize;
    let policy = PolicyNet {
        net: read_mlp(r)?,
        action_dim,
    };
    let q = [read_mlp(r)?, read_mlp(r)?];
    let q_target = [read_mlp(r)?, read_mlp(r)?];
    let opt_policy = read_adam(r)?;
    let opt_q = [read_adam(r)?, read_adam(r)?];
    let opt_alpha = read_adam(r)?;

    if policy.net.output_dim() != 2 * action_dim
        || !q
            .iter()
            .chain(&q_target)
            .all(|n| n.same_shape(&q[0]) && n.input_dim() == policy.net.input_dim() + action_dim)
        || opt_policy.m.len() != policy.net.num_params()
        || opt_q.iter().any(|o| o.m.len() != q[0].num_params())
        || opt_alpha.m.len() != 1
    {
        return Err(invalid("inconsistent network or optimizer shapes"));
    }
    Ok((
        Learner {
            algorithm,
            flags,
            hp,
            policy,
            q,
            q_target,
            log_alpha,
            opt_policy,
            opt_q,
            opt_alpha,
        },
        config_hash,
    ))
}
