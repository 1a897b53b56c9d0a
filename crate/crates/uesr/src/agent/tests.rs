use super::*;
use crate::nn::gradcheck::{grad_check, DEFAULT_FD_STEP};
use crate::nn::params::ParameterSet;

fn zero_params(p: &mut ParameterSet) {
    let names: Vec<String> = p.names().map(|s| s.to_string()).collect();
    for n in names {
        p.value_mut(&n).fill(0.0);
    }
}

#[test]
fn returns_match_the_stated_examples() {
    // Direct-summation values: R_0 = 1 + 0.99^5 * 2 with no dones.
    let r = n_step_returns(&[1.0, 0.0, 0.0, 0.0, 0.0], &[false; 5], 2.0, 0.99);
    assert!((r[0] - (1.0 + 0.99f64.powi(5) * 2.0)).abs() < 1e-12);
    assert!((r[0] - 2.90198).abs() < 1e-5);

    let r = n_step_returns(&[0.0; 5], &[false; 5], 0.0, 0.99);
    assert!(r.iter().all(|&x| x == 0.0));

    // A done step contributes its reward exactly, no bootstrap.
    let dones = [false, false, true, false, false];
    let r = n_step_returns(&[0.0, 0.0, 1.0, 0.0, 0.0], &dones, 7.0, 0.99);
    assert_eq!(r[2], 1.0);
    assert!((r[0] - 0.99f64.powi(2)).abs() < 1e-12);
}

#[test]
fn returns_match_brute_force_summation() {
    // Oracle: directly sum discounted rewards up to the first done at or
    // after t (inclusive), adding the discounted bootstrap only if no done
    // was hit.
    fn brute(rewards: &[f64], dones: &[bool], boot: f64, gamma: f64, t: usize) -> f64 {
        let mut acc = 0.0;
        let mut disc = 1.0;
        for k in t..rewards.len() {
            acc += disc * rewards[k];
            if dones[k] {
                return acc;
            }
            disc *= gamma;
        }
        acc + disc * boot
    }

    let mut rng = crate::rng::Rng::from_seed(42);
    for _ in 0..200 {
        let n = 1 + rng.range(8);
        let rewards: Vec<f64> = (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.chance(0.2)).collect();
        let boot = rng.range_f64(-2.0, 2.0);
        let gamma = rng.range_f64(0.5, 1.0);
        let fast = n_step_returns(&rewards, &dones, boot, gamma);
        for t in 0..n {
            let slow = brute(&rewards, &dones, boot, gamma, t);
            assert!(
                (fast[t] - slow).abs() < 1e-12,
                "t={t}: {} vs {}",
                fast[t],
                slow
            );
        }
    }
}

#[test]
fn scheme_none_yields_no_bits() {
    let mut agent = A2cAgent::new(8, 0, 1, 5);
    agent.begin_segment();
    let out = agent.act(0, &[0.1; 8]);
    assert!(out.bits.is_empty());
    assert_eq!(out.log_probs.len(), 1);
    agent.discard_segment();
}

#[test]
fn forced_onehot_logits_give_deterministic_action_and_zero_entropy() {
    let mut agent = A2cAgent::new(4, 2, 1, 9);
    zero_params(&mut agent.actor.params);
    // Huge bias on action 2 and on bit value 1 for both bit heads.
    {
        let b = agent.actor.params.value_mut("head.b").data_mut();
        b[2] = 60.0; // action head
        b[N_ACTIONS + 1] = 60.0; // bit 0 -> 1
        b[N_ACTIONS + 3] = 60.0; // bit 1 -> 1
    }
    agent.begin_segment();
    for _ in 0..20 {
        let out = agent.act(0, &[0.0; 4]);
        assert_eq!(out.action, 2);
        assert_eq!(out.bits, vec![1, 1]);
        assert!(out.entropies.iter().all(|&h| h.abs() < 1e-9));
        assert!(out.log_probs.iter().all(|&lp| lp.abs() < 1e-9));
    }
    agent.discard_segment();
}

#[test]
fn joint_log_prob_is_the_sum_of_channel_log_probs() {
    let mut agent = A2cAgent::new(6, 3, 1, 77);
    agent.begin_segment();
    let input = [0.2, 0.8, 0.1, 0.5, 0.9, 0.3];
    let out = agent.act(0, &input);
    agent.discard_segment();

    // Recompute each channel's probabilities from an identical forward pass.
    let mut tape = Tape::new();
    let vars = agent.actor.vars(&mut tape);
    let x = tape.leaf_slice(&input);
    let h = tape.leaf(ActorNetwork::initial_hidden());
    let (a_logits, bit_logits, _) = agent.actor.forward_step(&mut tape, &vars, x, h);
    let a_probs = {
        let p = tape.softmax(a_logits);
        tape.value(p).data().to_vec()
    };
    let mut joint = a_probs[out.action];
    for (k, bl) in bit_logits.into_iter().enumerate() {
        let p = tape.softmax(bl);
        joint *= tape.value(p).data()[out.bits[k] as usize];
    }
    let sum: f64 = out.log_probs.iter().sum();
    assert!((sum - joint.ln()).abs() < 1e-12);
}

#[test]
fn zero_advantage_zero_entropy_update_leaves_actor_unchanged() {
    // With returns identical to values and no entropy bonus, the actor
    // gradient is exactly zero, and Adam with fresh moments is a no-op.
    let mut agent = A2cAgent::new(4, 1, 2, 3);
    zero_params(&mut agent.critic.online);
    zero_params(&mut agent.critic.target);
    let before = agent.actor.params.clone();

    let mut cfg = A2cConfig::defaults_for(Scheme::Reward);
    cfg.entropy_coef = 0.0;
    cfg.n_steps = 3;
    cfg.batch_envs = 2;

    agent.begin_segment();
    for _ in 0..3 {
        for e in 0..2 {
            agent.act(e, &[0.1, 0.2, 0.3, 0.4]);
            agent.record_outcome(e, 0.0, false);
        }
    }
    let boots = vec![vec![0.0; 4], vec![0.0; 4]];
    let report = agent.update(&boots, &cfg).unwrap();
    assert_eq!(report.actor_loss, 0.0);
    // The Adam step counter ticks, but every value must be bit-identical.
    for name in before.names() {
        assert_eq!(agent.actor.params.value(name), before.value(name), "{name}");
    }
}

#[test]
fn policy_gradient_at_logits_matches_closed_form() {
    // Single step, single channel: for L = -A * log softmax(logits)[a],
    // dL/dlogits = A * (pi - onehot(a)).
    let actor = ActorNetwork::new(3, 0, 21);
    let advantage = 1.7;
    let action = 3usize;
    let mut tape = Tape::new();
    let vars = actor.vars(&mut tape);
    let x = tape.leaf_slice(&[0.4, -0.2, 0.9]);
    let h = tape.leaf(ActorNetwork::initial_hidden());
    let (logits, _, _) = actor.forward_step(&mut tape, &vars, x, h);
    let pi = {
        let p = tape.softmax(logits);
        tape.value(p).data().to_vec()
    };
    let lsm = tape.log_softmax(logits);
    let lp = tape.pick(lsm, action);
    let loss = tape.scale(lp, -advantage);
    tape.backward(loss);
    let got = tape.grad(logits);
    for j in 0..N_ACTIONS {
        let want = advantage * (pi[j] - if j == action { 1.0 } else { 0.0 });
        assert!(
            (got[j] - want).abs() < 1e-12,
            "logit {j}: {} vs {}",
            got[j],
            want
        );
    }
}

#[test]
fn actor_loss_surrogate_passes_finite_difference_check() {
    // Full actor loss on a fixed two-step, two-env mini-batch, checked
    // against central differences over every actor parameter.
    let mut actor = ActorNetwork::new(4, 1, 31);
    let inputs = [
        [[0.1, 0.9, -0.3, 0.2], [0.5, 0.4, 0.0, -0.7]],
        [[-0.2, 0.3, 0.8, 0.1], [0.6, -0.5, 0.2, 0.9]],
    ];
    let actions = [[1usize, 4], [0, 2]];
    let bits = [[0usize, 1], [1, 0]];
    let advantages = [[0.7, -1.2], [0.4, 2.0]];
    let entropy_coef = 0.01;

    let report = grad_check(
        |tape, params| {
            let vars = (
                crate::nn::layers::linear_vars(tape, params, "l1"),
                crate::nn::layers::gru_vars(tape, params, "gru"),
                crate::nn::layers::linear_vars(tape, params, "head"),
            );
            let mut parts = Vec::new();
            for e in 0..2 {
                let mut h = tape.leaf(ActorNetwork::initial_hidden());
                for t in 0..2 {
                    let x = tape.leaf_slice(&inputs[e][t]);
                    let z = crate::nn::layers::linear_forward(tape, &vars.0, x);
                    let z = tape.relu(z);
                    h = crate::nn::layers::gru_step(tape, &vars.1, z, h);
                    let out = tape.relu(h);
                    let logits = crate::nn::layers::linear_forward(tape, &vars.2, out);
                    let a_logits = tape.slice(logits, 0, N_ACTIONS);
                    let b_logits = tape.slice(logits, N_ACTIONS, 2);

                    let lsm = tape.log_softmax(a_logits);
                    let lp_a = tape.pick(lsm, actions[e][t]);
                    let lsm_b = tape.log_softmax(b_logits);
                    let lp_b = tape.pick(lsm_b, bits[e][t]);
                    let joint = tape.add(lp_a, lp_b);
                    parts.push(tape.scale(joint, -advantages[e][t]));

                    let ha = tape.entropy_from_logits(a_logits);
                    let hb = tape.entropy_from_logits(b_logits);
                    let hsum = tape.add(ha, hb);
                    parts.push(tape.scale(hsum, -entropy_coef));
                }
            }
            let total = tape.add_n(&parts);
            tape.scale(total, 0.25)
        },
        &mut actor.params,
        DEFAULT_FD_STEP,
    );
    assert!(report.passes(1e-5), "{report}");
}

#[test]
fn critic_loss_passes_finite_difference_check() {
    let mut critic = CriticNetwork::new(5, 41);
    let inputs = [[0.2, -0.1, 0.7, 0.3, -0.6], [0.9, 0.0, -0.4, 0.5, 0.1]];
    let returns = [1.25, -0.5];
    let mut params = critic.online.clone();
    let report = grad_check(
        |tape, params| {
            let vars = CriticNetwork::vars(tape, params);
            let mut parts = Vec::new();
            for (input, ret) in inputs.iter().zip(returns) {
                let x = tape.leaf_slice(input);
                let v = CriticNetwork::forward(tape, &vars, x);
                let d = tape.add_scalar(v, -ret);
                parts.push(tape.mul(d, d));
            }
            let s = tape.add_n(&parts);
            tape.scale(s, 0.5)
        },
        &mut params,
        DEFAULT_FD_STEP,
    );
    assert!(report.passes(1e-5), "{report}");
    critic.online = params;
}

#[test]
fn value_changes_after_update_on_nonzero_advantage_batch() {
    let mut agent = A2cAgent::new(4, 0, 1, 13);
    let cfg = A2cConfig::defaults_for(Scheme::Ia2c);
    let probe = [0.3, 0.3, 0.3, 0.3];
    let v_before = agent.critic.evaluate(&probe, false);
    agent.begin_segment();
    for _ in 0..5 {
        agent.act(0, &probe);
        agent.record_outcome(0, 1.0, false);
    }
    agent.update(&[probe.to_vec()], &cfg).unwrap();
    let v_after = agent.critic.evaluate(&probe, false);
    assert_ne!(v_before, v_after);
}

#[test]
fn critic_loss_is_monotone_on_fixed_batches() {
    // 10 small Adam steps on a fixed batch must not increase the loss, for
    // at least 95 of 100 random (net, batch) draws.
    use crate::nn::params::OptimizerConfig;
    let mut rng = crate::rng::Rng::from_seed(7);
    let mut monotone = 0;
    for trial in 0..100 {
        let mut critic = CriticNetwork::new(3, 1000 + trial);
        let inputs: Vec<[f64; 3]> = (0..4)
            .map(|_| {
                [
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(-1.0, 1.0),
                    rng.range_f64(-1.0, 1.0),
                ]
            })
            .collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let opt = OptimizerConfig::with_lr(1e-3);

        let loss_of = |params: &ParameterSet| -> f64 {
            let mut t = Tape::new();
            let vars = CriticNetwork::vars(&mut t, params);
            let mut acc = 0.0;
            for (input, &target) in inputs.iter().zip(&targets) {
                let x = t.leaf_slice(input);
                let v = CriticNetwork::forward(&mut t, &vars, x);
                let d = t.value(v).item() - target;
                acc += d * d;
            }
            acc / inputs.len() as f64
        };

        let mut prev = loss_of(&critic.online);
        let mut ok = true;
        for _ in 0..10 {
            let mut t = Tape::new();
            let vars = CriticNetwork::vars(&mut t, &critic.online);
            let mut parts = Vec::new();
            for (input, &target) in inputs.iter().zip(&targets) {
                let x = t.leaf_slice(input);
                let v = CriticNetwork::forward(&mut t, &vars, x);
                let d = t.add_scalar(v, -target);
                parts.push(t.mul(d, d));
            }
            let s = t.add_n(&parts);
            let loss = t.scale(s, 1.0 / inputs.len() as f64);
            t.backward(loss);
            critic.online.zero_grads();
            t.accumulate_param_grads(&mut critic.online);
            critic.online.adam_step(&opt);

            let cur = loss_of(&critic.online);
            if cur > prev + 1e-12 {
                ok = false;
                break;
            }
            prev = cur;
        }
        if ok {
            monotone += 1;
        }
    }
    assert!(monotone >= 95, "only {monotone}/100 batches were monotone");
}

#[test]
fn assemble_message_shapes() {
    let m = assemble_message(Scheme::UesR, &[1, 0, 1, 0, 1], &[0.2, 0.4, 0.6, 0.8, 0.5]).unwrap();
    assert_eq!(m.len(), 10);
    assert!(m.reward_part().iter().all(|&v| v == 0.0 || v == 1.0));
    assert_eq!(m.scheme_split(), (5, 5));

    assert!(assemble_message(Scheme::Ia2c, &[], &[]).is_none());

    // Default splits all land on total length 10.
    let r = assemble_message(Scheme::Reward, &[1; 10], &[]).unwrap();
    let u = assemble_message(Scheme::Ues, &[], &[0.5; 10]).unwrap();
    assert_eq!(r.len(), 10);
    assert_eq!(u.len(), 10);
}

#[test]
#[should_panic(expected = "live ues part")]
fn reward_scheme_rejects_live_ues_values() {
    let _ = assemble_message(Scheme::Reward, &[1, 0], &[0.3]);
}

#[test]
fn scheme_defaults_match_the_experiment_table() {
    assert_eq!(Scheme::Ia2c.default_split(), (0, 0));
    assert_eq!(Scheme::Reward.default_split(), (10, 0));
    assert_eq!(Scheme::Ues.default_split(), (0, 10));
    assert_eq!(Scheme::UesR.default_split(), (5, 5));
    assert_eq!(Scheme::Ia2c.default_learning_rate(), 0.0005);
    assert_eq!(Scheme::Reward.default_learning_rate(), 0.0005);
    assert_eq!(Scheme::Ues.default_learning_rate(), 0.001);
    assert_eq!(Scheme::UesR.default_learning_rate(), 0.0005);
    assert_eq!(Scheme::Ia2c.default_entropy_coef(), 0.01);
    assert_eq!(Scheme::UesR.default_entropy_coef(), 0.05);
}

#[test]
#[should_panic(expected = "input length mismatch")]
fn act_rejects_wrong_input_length() {
    let mut agent = A2cAgent::new(8, 0, 1, 5);
    agent.begin_segment();
    let _ = agent.act(0, &[0.0; 7]);
}
